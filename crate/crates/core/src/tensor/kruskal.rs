//! Kruskal (CP) tensors: weights plus one factor matrix per mode.

use super::{khatri_rao, DenseTensor, UnfoldingRule};
use crate::error::{invalid, FcpError, Result};
use crate::linalg::{kruskal_norm_sq_gram, random_unit_columns};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `⟦λ; A^(1), …, A^(N)⟧ = Σ_r λ_r a_r^(1) ∘ … ∘ a_r^(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalTensor {
    weights: Vec<f64>,
    factors: Vec<DMatrix<f64>>,
}

impl KruskalTensor {
    /// Weights must be finite and positive; every factor needs one column
    /// per weight and at least one row.
    pub fn new(weights: Vec<f64>, factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return invalid("Kruskal tensor needs at least one factor");
        }
        if weights.is_empty() {
            return invalid("Kruskal tensor needs rank at least one");
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return invalid(format!("weights must be finite and positive, got {w}"));
        }
        let r = weights.len();
        for (n, f) in factors.iter().enumerate() {
            if f.ncols() != r || f.nrows() == 0 {
                return invalid(format!(
                    "factor {} is {}x{}, expected rank {r}",
                    n + 1,
                    f.nrows(),
                    f.ncols()
                ));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(FcpError::Numeric(format!("factor {} has non-finite entries", n + 1)));
            }
        }
        Ok(Self { weights, factors })
    }

    /// Unit weights with the given factors.
    pub fn from_factors(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        let r = factors.first().map_or(0, |f| f.ncols());
        Self::new(vec![1.0; r], factors)
    }

    /// Gaussian factors with unit-norm columns and unit weights.
    pub fn random<R: Rng + ?Sized>(shape: &[usize], rank: usize, rng: &mut R) -> Result<Self> {
        let factors = shape.iter().map(|&i| random_unit_columns(i, rank, rng)).collect();
        Self::new(vec![1.0; rank], factors)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn factor(&self, n: usize) -> &DMatrix<f64> {
        &self.factors[n]
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<DMatrix<f64>>) {
        (self.weights, self.factors)
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Factors with the weights folded into the first one.
    pub fn weighted_factors(&self) -> Vec<DMatrix<f64>> {
        let mut f = self.factors.clone();
        for (j, &w) in self.weights.iter().enumerate() {
            f[0].column_mut(j).scale_mut(w);
        }
        f
    }

    /// Dense expansion, computed as `A^(1) diag(λ) (⊙_{n≥2} A^(n))ᵀ`.
    pub fn to_dense(&self) -> DenseTensor {
        let shape = self.shape();
        let a1 = &self.factors[0] * DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights));
        let data = if self.order() == 1 {
            a1.column_sum().as_slice().to_vec()
        } else {
            let rest = khatri_rao(&self.factors[1..]).expect("factors share rank");
            (a1 * rest.transpose()).as_slice().to_vec()
        };
        DenseTensor::new(shape, data).expect("shape matches expansion")
    }

    /// `‖·‖_F²` via the Gram identity.
    pub fn norm_sq(&self) -> f64 {
        kruskal_norm_sq_gram(&self.factors, &self.weights).max(0.0)
    }

    /// Merged Kruskal tensor of the unfolding: same weights, group factors
    /// combined by Khatri-Rao products in group order.
    pub fn unfold(&self, rule: &UnfoldingRule) -> Result<KruskalTensor> {
        rule.validate(self.order())?;
        let factors = rule
            .groups()
            .iter()
            .map(|g| {
                let mats: Vec<&DMatrix<f64>> = g.iter().map(|&k| &self.factors[k]).collect();
                khatri_rao(&mats)
            })
            .collect::<Result<Vec<_>>>()?;
        KruskalTensor::new(self.weights.clone(), factors)
    }

    /// Reorders modes: result mode `k` is source mode `perm[k]`.
    pub fn permute_modes(&self, perm: &[usize]) -> Result<KruskalTensor> {
        super::check_permutation(perm, self.order())?;
        let factors = perm.iter().map(|&p| self.factors[p].clone()).collect();
        KruskalTensor::new(self.weights.clone(), factors)
    }

    /// Unit-norm columns, norms absorbed into positive weights sorted in
    /// descending order (stable). Negative products flip the first factor.
    pub fn normalize(&self) -> Result<KruskalTensor> {
        normalize_parts(&self.weights, &self.factors)
    }

    /// Keeps the components at the given positions, in that order.
    pub fn select(&self, components: &[usize]) -> Result<KruskalTensor> {
        let weights = components.iter().map(|&j| self.weights[j]).collect();
        let factors = self
            .factors
            .iter()
            .map(|f| f.select_columns(components.iter()))
            .collect();
        KruskalTensor::new(weights, factors)
    }

    /// The `r` components with the largest weights, after normalization.
    pub fn truncate(&self, r: usize) -> Result<KruskalTensor> {
        let k = self.normalize()?;
        if r >= k.rank() {
            return Ok(k);
        }
        k.select(&(0..r).collect::<Vec<_>>())
    }
}

/// Normalizes raw factors with signed weights.
pub(crate) fn normalize_parts(weights: &[f64], factors: &[DMatrix<f64>]) -> Result<KruskalTensor> {
    let r = weights.len();
    let mut lambda = weights.to_vec();
    let mut out: Vec<DMatrix<f64>> = factors.to_vec();
    for (n, f) in out.iter_mut().enumerate() {
        for j in 0..r {
            let norm = f.column(j).norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(FcpError::DegenerateComponent(format!(
                    "column {} of factor {} has norm {norm}",
                    j + 1,
                    n + 1
                )));
            }
            f.column_mut(j).unscale_mut(norm);
            lambda[j] *= norm;
        }
    }
    for j in 0..r {
        if lambda[j] < 0.0 {
            lambda[j] = -lambda[j];
            out[0].column_mut(j).neg_mut();
        }
        if lambda[j] == 0.0 {
            return Err(FcpError::DegenerateComponent(format!(
                "component {} has zero weight",
                j + 1
            )));
        }
    }
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let weights = order.iter().map(|&j| lambda[j]).collect();
    let factors = out.iter().map(|f| f.select_columns(order.iter())).collect();
    KruskalTensor::new(weights, factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_kruskal(seed: u64, shape: &[usize], r: usize) -> KruskalTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = shape
            .iter()
            .map(|&i| DMatrix::from_fn(i, r, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let weights = (0..r).map(|j| 1.0 + j as f64).collect();
        KruskalTensor::new(weights, factors).unwrap()
    }

    #[test]
    fn rank_one_constant_tensor() {
        let shape = [2, 3, 4];
        let factors = shape
            .iter()
            .map(|&i| DMatrix::from_element(i, 1, 1.0 / (i as f64).sqrt()))
            .collect();
        let k = KruskalTensor::new(vec![5.0], factors).unwrap();
        let expect = 5.0 / (24.0f64).sqrt();
        for x in k.to_dense().data() {
            assert!((x - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn to_dense_matches_nested_loops() {
        let k = rand_kruskal(1, &[3, 2, 4, 2], 3);
        let d = k.to_dense();
        let f = k.factors();
        for i in 0..3 {
            for j in 0..2 {
                for l in 0..4 {
                    for m in 0..2 {
                        let mut s = 0.0;
                        for r in 0..3 {
                            s += k.weights()[r] * f[0][(i, r)] * f[1][(j, r)] * f[2][(l, r)] * f[3][(m, r)];
                        }
                        assert!((d.get(&[i, j, l, m]) - s).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_weights_and_shapes() {
        let f = vec![DMatrix::zeros(2, 2), DMatrix::zeros(3, 2)];
        assert!(KruskalTensor::new(vec![1.0, -1.0], f.clone()).is_err());
        assert!(KruskalTensor::new(vec![1.0, 0.0], f.clone()).is_err());
        assert!(KruskalTensor::new(vec![1.0, f64::NAN], f.clone()).is_err());
        assert!(KruskalTensor::new(vec![1.0], f).is_err());
    }

    #[test]
    fn normalize_absorbs_norms() {
        let a = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 3.0, 0.0]);
        let k = KruskalTensor::new(vec![1.0], vec![a, b]).unwrap().normalize().unwrap();
        assert!((k.weights()[0] - 6.0).abs() < 1e-15);
        for f in k.factors() {
            assert!((f.column(0).norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_preserves_dense_and_sorts() {
        let k = rand_kruskal(4, &[3, 4, 5], 4);
        let n = k.normalize().unwrap();
        let d0 = k.to_dense();
        assert!(n.to_dense().distance(&d0).unwrap() < 1e-12 * d0.norm());
        assert!(n.weights().windows(2).all(|w| w[0] >= w[1]));
        let again = n.normalize().unwrap();
        for (a, b) in again.weights().iter().zip(n.weights()) {
            assert!((a - b).abs() < 1e-14 * b);
        }
        for (a, b) in again.factors().iter().zip(n.factors()) {
            assert!((a - b).amax() < 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_zero_column() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_element(2, 2, 1.0);
        let k = KruskalTensor::new(vec![1.0, 1.0], vec![a, b]).unwrap();
        assert!(matches!(k.normalize(), Err(FcpError::DegenerateComponent(_))));
    }

    #[test]
    fn unfold_merges_groups_in_khatri_rao_order() {
        let k = rand_kruskal(5, &[2, 3, 4, 2], 3);
        let rule: UnfoldingRule = "1,2,(3,4)".parse().unwrap();
        let u = k.unfold(&rule).unwrap();
        assert_eq!(u.order(), 3);
        let merged = khatri_rao(&[k.factor(2).clone(), k.factor(3).clone()]).unwrap();
        assert_eq!(u.factor(2), &merged);
        let dense_path = k.to_dense().unfold(&rule).unwrap();
        let d = u.to_dense();
        assert!(d.distance(&dense_path).unwrap() < 1e-12 * d.norm());
        assert_eq!(k.unfold(&UnfoldingRule::identity(4)).unwrap(), k);
    }

    #[test]
    fn gram_norm_matches_dense() {
        let k = rand_kruskal(6, &[3, 4, 2], 3);
        assert!((k.norm_sq() - k.to_dense().norm_sq()).abs() < 1e-12 * k.norm_sq());
    }
}
