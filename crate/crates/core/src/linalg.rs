//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{FcpError, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Elementwise product of two equally sized matrices.
pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.component_mul(b)
}

/// `AᵀA`.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.tr_mul(a)
}

/// Hadamard product of all matrices in `mats` except index `skip`; `ones`
/// when nothing is left.
pub fn hadamard_except(mats: &[DMatrix<f64>], skip: usize, r: usize) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(r, r, 1.0);
    for (k, m) in mats.iter().enumerate() {
        if k != skip {
            out.component_mul_assign(m);
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix.
///
/// Eigenvalues below `1e-12 * max` are dropped; the flag reports whether
/// that happened.
pub fn pinv_psd(g: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = g.nrows();
    if let Some(chol) = g.clone().cholesky() {
        // cheap conditioning probe on the Cholesky diagonal
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 && min > 1e-10 * max {
            return (chol.inverse(), false);
        }
    }
    let (vals, vecs) = sym_eigen_desc(g);
    let max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = 1e-12 * max;
    let mut degenerate = false;
    let mut out = DMatrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        if v > cutoff && v > 0.0 {
            let col = vecs.column(k);
            out += (col * col.transpose()) / v;
        } else {
            degenerate = true;
        }
    }
    (out, degenerate)
}

/// Euclidean norms of the columns.
pub fn column_norms(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter().map(|c| c.norm()).collect()
}

/// `k` leading left singular vectors of `x` (rows × k), sorted by singular
/// value. When `k` exceeds the numerical rank the basis is completed with
/// orthonormal directions.
pub fn leading_left_singular_vectors(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let rows = x.nrows();
    let k = k.min(rows);
    if rows <= x.ncols() {
        let (_, vecs) = sym_eigen_desc(&(x * x.transpose()));
        return vecs.columns(0, k).into_owned();
    }
    let (vals, vecs) = sym_eigen_desc(&gram(x));
    let tol = vals.first().copied().unwrap_or(0.0).max(0.0) * 1e-24;
    let mut cols = Vec::new();
    for (j, &v) in vals.iter().enumerate().take(k) {
        if v <= tol || v <= 0.0 {
            break;
        }
        let u = x * vecs.column(j) / v.sqrt();
        cols.push(u);
    }
    let partial = if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    complete_orthonormal(&partial, k)
}

/// Thin SVD `x = U diag(s) Vᵀ` with singular values in descending order,
/// by one-sided Jacobi rotations. Accurate to working precision on
/// rank-deficient input.
pub fn thin_svd(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if x.nrows() < x.ncols() {
        let (u, s, v) = thin_svd(&x.transpose())?;
        return Ok((v, s, u));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FcpError::Numeric("SVD input has non-finite entries".into()));
    }
    let (m, n) = x.shape();
    let mut a = x.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = n < 2;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (xp, xq) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * xp - s * xq;
                        mat[(i, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FcpError::Numeric("Jacobi SVD did not converge".into()));
    }
    let sigma: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let s: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let kept: Vec<DVector<f64>> = order
        .iter()
        .take_while(|&&j| sigma[j] > 0.0)
        .map(|&j| a.column(j) / sigma[j])
        .collect();
    let partial = if kept.is_empty() { DMatrix::zeros(m, 0) } else { DMatrix::from_columns(&kept) };
    let u = complete_orthonormal(&partial, n);
    Ok((u, s, v.select_columns(order.iter())))
}

/// Leading eigenvectors of a PSD Gram matrix `x xᵀ`, i.e. left singular
/// vectors of `x` when only its Gram is available.
pub fn leading_eigenvectors(g: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, vecs) = sym_eigen_desc(g);
    vecs.columns(0, k.min(g.nrows())).into_owned()
}

/// Extends the orthonormal columns of `u` to `k` columns by Gram-Schmidt
/// against the standard basis.
pub fn complete_orthonormal(u: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let rows = u.nrows();
    let mut cols: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    // re-orthogonalize what we were given
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for c in cols.drain(..) {
        push_orthogonal(&mut basis, c);
    }
    let mut e = 0;
    while basis.len() < k && e < rows {
        let mut v = DVector::zeros(rows);
        v[e] = 1.0;
        push_orthogonal(&mut basis, v);
        e += 1;
    }
    basis.truncate(k);
    if basis.is_empty() {
        return DMatrix::zeros(rows, 0);
    }
    DMatrix::from_columns(&basis)
}

fn push_orthogonal(basis: &mut Vec<DVector<f64>>, mut v: DVector<f64>) {
    let orig = v.norm();
    if orig == 0.0 {
        return;
    }
    for _ in 0..2 {
        for b in basis.iter() {
            let p = b.dot(&v);
            v.axpy(-p, b, 1.0);
        }
    }
    let n = v.norm();
    if n > 1e-8 * orig {
        basis.push(v / n);
    }
}

/// Haar-distributed `rows × cols` matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if cols > rows {
        return Err(FcpError::InvalidArgument(format!(
            "cannot draw {cols} orthonormal columns in dimension {rows}"
        )));
    }
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Gaussian matrix with unit-norm columns.
pub fn random_unit_columns<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut c in g.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    g
}

/// Upper-triangular factor of a thin QR, `min(rows, cols) × cols`.
fn r_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() <= a.ncols() {
        // already no taller than wide; an orthogonal transform changes nothing
        return a.clone();
    }
    a.clone().qr().r()
}

/// `‖Σ_r w_r a_r^(1) ∘ … ∘ a_r^(N)‖_F` evaluated through QR factors of each
/// mode, without forming the dense tensor.
///
/// Accurate to working precision even when the norm is tiny relative to
/// the individual terms, which the Gram-based identity is not.
pub fn kruskal_norm_qr(factors: &[DMatrix<f64>], weights: &[f64]) -> f64 {
    let mut z = r_factor(&factors[0]);
    for f in &factors[1..] {
        let rn = r_factor(f);
        let kr = crate::tensor::khatri_rao(&[z, rn]).expect("matching column counts");
        z = r_factor(&kr);
    }
    let w = DVector::from_column_slice(weights);
    (z * w).norm()
}

/// `‖Σ_r w_r a_r^(1) ∘ … ∘ a_r^(N)‖_F²` via the Gram identity
/// `wᵀ(⊛_n A^(n)ᵀA^(n))w`.
pub fn kruskal_norm_sq_gram(factors: &[DMatrix<f64>], weights: &[f64]) -> f64 {
    let r = weights.len();
    let mut h = DMatrix::from_element(r, r, 1.0);
    for f in factors {
        h.component_mul_assign(&gram(f));
    }
    let w = DVector::from_column_slice(weights);
    (w.transpose() * h * &w)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (p, deg) = pinv_psd(&a);
        assert!(!deg);
        assert!((&a * p - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_flags_degenerate() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let a = &v * v.transpose();
        let (p, deg) = pinv_psd(&a);
        assert!(deg);
        // Moore-Penrose condition A P A = A
        assert!((&a * &p * &a - &a).norm() < 1e-10);
    }

    #[test]
    fn leading_vectors_match_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(4, 9), (9, 4)] {
            let x = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            let u = leading_left_singular_vectors(&x, 2);
            let svd = x.clone().svd(true, false);
            let uref = svd.u.unwrap();
            for j in 0..2 {
                let dot = u.column(j).dot(&uref.column(j)).abs();
                assert!((dot - 1.0).abs() < 1e-9, "{r}x{c} col {j}: {dot}");
            }
        }
    }

    #[test]
    fn thin_svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // includes an exactly rank-one wide case
        let u: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let rank1 = DMatrix::from_fn(3, 4, |i, j| u[i] * w[j]);
        let cases = [
            rank1,
            DMatrix::from_fn(6, 3, |_, _| rng.sample::<f64, _>(StandardNormal)),
            DMatrix::from_fn(2, 7, |_, _| rng.sample::<f64, _>(StandardNormal)),
            DMatrix::zeros(3, 2),
        ];
        for x in cases {
            let (u, s, v) = thin_svd(&x).unwrap();
            let k = x.nrows().min(x.ncols());
            assert_eq!((u.shape(), s.len(), v.shape()), ((x.nrows(), k), k, (x.ncols(), k)));
            assert!(s.windows(2).all(|p| p[0] >= p[1]));
            let rec = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
            assert!((rec - &x).norm() <= 1e-14 * (1.0 + x.norm()));
            assert!((gram(&u) - DMatrix::identity(k, k)).norm() < 1e-12);
            assert!((gram(&v) - DMatrix::identity(k, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn leading_vectors_complete_rank_deficient() {
        let x = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
        let u = leading_left_singular_vectors(&x, 4);
        assert_eq!(u.ncols(), 4);
        assert!((gram(&u) - DMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthonormal(7, 4, &mut rng).unwrap();
        assert!((gram(&q) - DMatrix::identity(4, 4)).norm() < 1e-12);
        assert!(random_orthonormal(3, 4, &mut rng).is_err());
    }

    #[test]
    fn qr_norm_matches_gram_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let factors: Vec<_> = [3, 4, 2]
            .iter()
            .map(|&i| random_unit_columns(i, 5, &mut rng))
            .collect();
        let w = [1.0, -0.5, 2.0, 0.3, 0.7];
        let a = kruskal_norm_qr(&factors, &w);
        let b = kruskal_norm_sq_gram(&factors, &w).sqrt();
        assert!((a - b).abs() < 1e-12 * b);
    }

    #[test]
    fn qr_norm_resolves_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<_> = [4, 3, 5]
            .iter()
            .map(|&i| random_unit_columns(i, 2, &mut rng))
            .collect();
        // two copies of the same rank-2 tensor with opposite signs,
        // the second perturbed by 1e-9 in one entry of mode 0
        let mut stacked = Vec::new();
        for (n, m) in f.iter().enumerate() {
            let mut g = m.clone();
            if n == 0 {
                g[(0, 0)] += 1e-9;
            }
            let mut s = DMatrix::zeros(m.nrows(), 4);
            s.columns_mut(0, 2).copy_from(m);
            s.columns_mut(2, 2).copy_from(&g);
            stacked.push(s);
        }
        let w = [1.0, 1.0, -1.0, -1.0];
        let exact = 1e-9 * f[1].column(0).norm() * f[2].column(0).norm();
        let got = kruskal_norm_qr(&stacked, &w);
        assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
    }
}
