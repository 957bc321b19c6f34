//! Structured Kruskal tensors produced by splitting merged components, with
//! CP gradients and ALS that work on the factored form only.
//!
//! The working tensor has `N` modes; the split pair is always the last two.
//! Component `r` contributes `λ_r · b_r^(1) ∘ … ∘ b_r^(N−2) ∘ (U_r Σ_r V_rᵀ)`,
//! i.e. `J_r` rank-one terms that share the first `N − 2` factor columns.

use crate::als::{als_engine, AlsOptions, AlsTarget, FitReport};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::linalg::{gram, hadamard_except, kruskal_norm_qr};
use crate::tensor::{DenseTensor, KruskalTensor};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredKruskal {
    lambda: Vec<f64>,
    shared: Vec<DMatrix<f64>>,
    u: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    sigma: Vec<Vec<f64>>,
    /// `V_r diag(σ_r)`
    v_scaled: Vec<DMatrix<f64>>,
}

impl StructuredKruskal {
    /// `shared` holds `B^(1..N−2)` (each `I_n × R`); `u[r]`, `v[r]` are the
    /// orthonormal split bases of component `r` and `sigma[r]` their
    /// singular values.
    pub fn new(
        lambda: Vec<f64>,
        shared: Vec<DMatrix<f64>>,
        u: Vec<DMatrix<f64>>,
        v: Vec<DMatrix<f64>>,
        sigma: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let r = lambda.len();
        if r == 0 {
            return invalid("structured tensor needs at least one component");
        }
        if u.len() != r || v.len() != r || sigma.len() != r {
            return invalid("one split block per component is required");
        }
        if shared.iter().any(|b| b.ncols() != r) {
            return invalid("shared factors must have one column per component");
        }
        if lambda.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return invalid("component weights must be finite and positive");
        }
        let (iu, iv) = (u[0].nrows(), v[0].nrows());
        for k in 0..r {
            let j = sigma[k].len();
            if j == 0 || u[k].ncols() != j || v[k].ncols() != j || u[k].nrows() != iu || v[k].nrows() != iv {
                return invalid(format!("split block {} has inconsistent sizes", k + 1));
            }
            for basis in [&u[k], &v[k]] {
                let err = (basis.tr_mul(basis) - DMatrix::<f64>::identity(j, j)).amax();
                if err > 1e-10 {
                    return invalid(format!("split basis of component {} is not orthonormal ({err:e})", k + 1));
                }
            }
            if sigma[k].iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return invalid(format!("singular values of component {} must be positive", k + 1));
            }
        }
        let v_scaled = v
            .iter()
            .zip(&sigma)
            .map(|(vr, s)| {
                let mut m = vr.clone();
                for (j, &sj) in s.iter().enumerate() {
                    m.column_mut(j).scale_mut(sj);
                }
                m
            })
            .collect();
        Ok(Self { lambda, shared, u, v, sigma, v_scaled })
    }

    /// Every component a single term: `J_r = 1`.
    pub fn from_kruskal(k: &KruskalTensor) -> Result<Self> {
        let n = k.order();
        if n < 2 {
            return invalid("structured form needs order at least 2");
        }
        let r = k.rank();
        let col = |m: &DMatrix<f64>, j: usize| {
            let c = m.column(j);
            let norm = c.norm();
            (c / norm, norm)
        };
        let mut lambda = k.weights().to_vec();
        let mut shared = Vec::new();
        for f in &k.factors()[..n - 2] {
            let mut b = f.clone();
            for j in 0..r {
                let (c, norm) = col(f, j);
                b.column_mut(j).copy_from(&c);
                lambda[j] *= norm;
            }
            shared.push(b);
        }
        let (mut u, mut v, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..r {
            let (cu, nu) = col(k.factor(n - 2), j);
            let (cv, nv) = col(k.factor(n - 1), j);
            u.push(DMatrix::from_column_slice(cu.len(), 1, cu.as_slice()));
            v.push(DMatrix::from_column_slice(cv.len(), 1, cv.as_slice()));
            sigma.push(vec![nu * nv]);
        }
        Self::new(lambda, shared, u, v, sigma)
    }

    pub fn order(&self) -> usize {
        self.shared.len() + 2
    }

    /// Number of merged components `R`.
    pub fn components(&self) -> usize {
        self.lambda.len()
    }

    /// Block sizes `J_r`.
    pub fn block_ranks(&self) -> Vec<usize> {
        self.sigma.iter().map(Vec::len).collect()
    }

    /// `J = Σ_r J_r`.
    pub fn total_rank(&self) -> usize {
        self.sigma.iter().map(Vec::len).sum()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn shared(&self) -> &[DMatrix<f64>] {
        &self.shared
    }

    pub fn split_bases(&self) -> (&[DMatrix<f64>], &[DMatrix<f64>], &[Vec<f64>]) {
        (&self.u, &self.v, &self.sigma)
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.shared.iter().map(|b| b.nrows()).collect();
        s.push(self.u[0].nrows());
        s.push(self.v[0].nrows());
        s
    }

    /// The equivalent plain rank-`J` Kruskal tensor: weights `λ_r σ_rj`,
    /// shared factors replicated across blocks.
    pub fn to_kruskal(&self) -> KruskalTensor {
        let blocks = self.block_ranks();
        let map: Vec<usize> = blocks.iter().enumerate().flat_map(|(r, &j)| std::iter::repeat_n(r, j)).collect();
        let mut factors: Vec<DMatrix<f64>> = self.shared.iter().map(|b| b.select_columns(map.iter())).collect();
        factors.push(concat_columns(&self.u));
        factors.push(concat_columns(&self.v));
        let weights = self
            .sigma
            .iter()
            .enumerate()
            .flat_map(|(r, s)| s.iter().map(move |&x| self.lambda[r] * x))
            .collect();
        KruskalTensor::new(weights, factors).expect("validated at construction")
    }

    pub fn to_dense(&self) -> DenseTensor {
        self.to_kruskal().to_dense()
    }

    /// The rank-`R` tensor keeping only the leading split term of every
    /// component.
    pub fn leading_terms(&self) -> KruskalTensor {
        let mut factors = self.shared.clone();
        factors.push(DMatrix::from_columns(&self.u.iter().map(|m| m.column(0).into_owned()).collect::<Vec<_>>()));
        factors.push(DMatrix::from_columns(&self.v.iter().map(|m| m.column(0).into_owned()).collect::<Vec<_>>()));
        let weights = self.lambda.iter().zip(&self.sigma).map(|(l, s)| l * s[0]).collect();
        KruskalTensor::new(weights, factors).expect("validated at construction")
    }

    /// `‖Ỹ‖_F²` from Gram identities.
    pub fn norm_sq(&self) -> f64 {
        let r = self.components();
        let grams: Vec<DMatrix<f64>> = self.shared.iter().map(gram).collect();
        let omega = hadamard_except(&grams, usize::MAX, r);
        let mut total = 0.0;
        for a in 0..r {
            for b in 0..r {
                let cu = self.u[a].tr_mul(&self.u[b]);
                let cv = self.v_scaled[a].tr_mul(&self.v_scaled[b]);
                let inner = cu.component_mul(&cv).sum();
                total += self.lambda[a] * self.lambda[b] * omega[(a, b)] * inner;
            }
        }
        total.max(0.0)
    }

    fn check_model(&self, factors: &[DMatrix<f64>]) -> Result<()> {
        let shape = self.shape();
        if factors.len() != shape.len() {
            return invalid(format!("expected {} factors, got {}", shape.len(), factors.len()));
        }
        let r = factors[0].ncols();
        for (n, (f, &i)) in factors.iter().zip(&shape).enumerate() {
            if f.nrows() != i || f.ncols() != r {
                return invalid(format!("factor {} is {}x{}, expected {i} rows and rank {r}", n + 1, f.nrows(), f.ncols()));
            }
        }
        Ok(())
    }

    /// `Ỹ_(n) · (⊙_{k≠n} A^(k))` from the factored form.
    fn structured_mttkrp(&self, a: &[DMatrix<f64>], n: usize, exec: Exec) -> Result<DMatrix<f64>> {
        self.check_model(a)?;
        let order = self.order();
        let rm = a[0].ncols();
        let rs = self.components();
        let p: Vec<DMatrix<f64>> = self.shared.iter().zip(a).map(|(b, ak)| b.tr_mul(ak)).collect();
        let prod = |skip: usize| {
            let mut out = DMatrix::from_element(rs, rm, 1.0);
            for (k, pk) in p.iter().enumerate() {
                if k != skip {
                    out.component_mul_assign(pk);
                }
            }
            out
        };
        let omega = prod(usize::MAX);
        let (su, sv) = (order - 2, order - 1);
        if n < su {
            // K[r, :] = λ_r Σ_j (Hu_r ⊛ Hv_r)[j, :]
            let rows = exec.map(rs, |r| {
                let hu = self.u[r].tr_mul(&a[su]);
                let hv = self.v_scaled[r].tr_mul(&a[sv]);
                hu.component_mul(&hv).row_sum() * self.lambda[r]
            });
            let mut k = DMatrix::zeros(rs, rm);
            for (r, row) in rows.iter().enumerate() {
                k.row_mut(r).copy_from(row);
            }
            let w = prod(n).component_mul(&k);
            return Ok(&self.shared[n] * w);
        }
        let (basis, other, other_mode) = if n == su {
            (&self.u, &self.v_scaled, sv)
        } else {
            (&self.v_scaled, &self.u, su)
        };
        let parts = exec.map(rs, |r| {
            let mut h = other[r].tr_mul(&a[other_mode]);
            for c in 0..rm {
                h.column_mut(c).scale_mut(self.lambda[r] * omega[(r, c)]);
            }
            &basis[r] * h
        });
        let mut out = DMatrix::zeros(basis[0].nrows(), rm);
        for part in parts {
            out += part;
        }
        Ok(out)
    }
}

fn concat_columns(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

impl AlsTarget for StructuredKruskal {
    fn shape(&self) -> Vec<usize> {
        StructuredKruskal::shape(self)
    }

    fn norm_sq(&self) -> f64 {
        StructuredKruskal::norm_sq(self)
    }

    fn mttkrp(&self, factors: &[DMatrix<f64>], n: usize, exec: Exec) -> Result<DMatrix<f64>> {
        self.structured_mttkrp(factors, n, exec)
    }

    fn residual(&self, weights: &[f64], factors: &[DMatrix<f64>], _exec: Exec) -> Result<f64> {
        let s = self.to_kruskal();
        let stacked: Vec<DMatrix<f64>> = s
            .factors()
            .iter()
            .zip(factors)
            .map(|(a, b)| concat_columns(&[a.clone(), b.clone()]))
            .collect();
        let w: Vec<f64> = s.weights().iter().copied().chain(weights.iter().map(|x| -x)).collect();
        Ok(kruskal_norm_qr(&stacked, &w))
    }
}

/// `(Ỹ_(n) − Ŷ_(n)) · (⊙_{k≠n} A^(k))` for the model `current`, without
/// forming either tensor.
pub fn structured_gradient(s: &StructuredKruskal, current: &KruskalTensor, n: usize) -> Result<DMatrix<f64>> {
    if n >= s.order() {
        return invalid(format!("mode {} out of range for order {}", n + 1, s.order()));
    }
    let a = current.factors();
    let first = s.structured_mttkrp(a, n, Exec::Sequential)?;
    let grams: Vec<DMatrix<f64>> = a.iter().map(gram).collect();
    let gamma = hadamard_except(&grams, n, current.rank());
    let mut model = a[n].clone();
    for (j, &w) in current.weights().iter().enumerate() {
        model.column_mut(j).scale_mut(w);
    }
    Ok(first - model * gamma)
}

/// Rank-`rank` CP-ALS fitted to the structured tensor, starting from `init`.
pub fn structured_als(
    s: &StructuredKruskal,
    rank: usize,
    init: &KruskalTensor,
    opts: &AlsOptions,
) -> Result<(KruskalTensor, FitReport)> {
    if init.rank() != rank {
        return invalid(format!("initial tensor has rank {}, expected {rank}", init.rank()));
    }
    if init.shape() != s.shape() {
        return invalid(format!("initial tensor has shape {:?}, expected {:?}", init.shape(), s.shape()));
    }
    als_engine(s, init.weighted_factors(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::als::{cp_als, Init};
    use crate::linalg::random_orthonormal;
    use crate::tensor::mttkrp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_structured(rng: &mut ChaCha8Rng, shape: &[usize], blocks: &[usize]) -> StructuredKruskal {
        let n = shape.len();
        let r = blocks.len();
        let lambda = (0..r).map(|_| rng.random_range(0.5..2.0)).collect();
        let shared = shape[..n - 2]
            .iter()
            .map(|&i| crate::linalg::random_unit_columns(i, r, rng))
            .collect();
        let mut u = Vec::new();
        let mut v = Vec::new();
        let mut sigma = Vec::new();
        for &j in blocks {
            u.push(random_orthonormal(shape[n - 2], j, rng).unwrap());
            v.push(random_orthonormal(shape[n - 1], j, rng).unwrap());
            let mut s: Vec<f64> = (0..j).map(|_| rng.random_range(0.1..1.0)).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            sigma.push(s);
        }
        StructuredKruskal::new(lambda, shared, u, v, sigma).unwrap()
    }

    #[test]
    fn gradient_matches_dense_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_structured(&mut rng, &[3, 4, 5, 4], &[1, 2, 3]);
        let cur = KruskalTensor::random(&s.shape(), 3, &mut rng).unwrap();
        let diff = s.to_dense().add_scaled(&cur.to_dense(), -1.0).unwrap();
        for n in 0..4 {
            let g = structured_gradient(&s, &cur, n).unwrap();
            let d = mttkrp(&diff, cur.factors(), n).unwrap();
            assert!((&g - &d).norm() <= 1e-10 * d.norm(), "mode {n}");
        }
    }

    #[test]
    fn norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let s = random_structured(&mut rng, &[2, 3, 4, 5, 3], &[2, 1, 3]);
        let dense = s.to_dense().norm_sq();
        assert!((s.norm_sq() - dense).abs() < 1e-10 * dense);
    }

    #[test]
    fn single_term_blocks_reduce_to_kruskal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let k = KruskalTensor::random(&[3, 4, 5], 2, &mut rng).unwrap();
        let s = StructuredKruskal::from_kruskal(&k).unwrap();
        assert_eq!(s.total_rank(), 2);
        let d = k.to_dense();
        assert!(s.to_dense().distance(&d).unwrap() < 1e-12 * d.norm());
        for n in 0..3 {
            let g = structured_gradient(&s, &k, n).unwrap();
            assert!(g.amax() < 1e-12, "mode {n}: {}", g.amax());
        }
    }

    #[test]
    fn als_tracks_dense_als_in_lockstep() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let s = random_structured(&mut rng, &[4, 5, 3, 4], &[2, 1, 2]);
        let init = KruskalTensor::random(&s.shape(), 3, &mut rng).unwrap();
        let opts = AlsOptions { max_iters: 25, ..Default::default() };
        let (a, ra) = structured_als(&s, 3, &init, &opts).unwrap();
        let (b, rb) = cp_als(&s.to_dense(), 3, &opts.clone().with_init(Init::Given(init))).unwrap();
        assert_eq!(ra.iterations, rb.iterations);
        for (x, y) in ra.history.iter().zip(&rb.history) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert!(a.to_dense().distance(&b.to_dense()).unwrap() < 1e-8 * b.to_dense().norm());
    }

    #[test]
    fn exact_model_converges_at_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let k = KruskalTensor::random(&[3, 4, 5, 3], 3, &mut rng).unwrap();
        let s = StructuredKruskal::from_kruskal(&k).unwrap();
        let (_, rep) = structured_als(&s, 3, &k, &AlsOptions::default()).unwrap();
        assert!(rep.iterations <= 2, "{rep:?}");
        assert!(rep.relative_error < 1e-10);
    }
}
