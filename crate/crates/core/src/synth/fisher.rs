//! Numeric Cramér-Rao induced bounds for arbitrary rank from the Fisher
//! information of the CP model under white Gaussian noise.
//!
//! The scaling ambiguity is removed by keeping the columns of modes `2..N`
//! at unit norm (perturbations orthogonal to the column) and absorbing the
//! weights into mode 1.

use crate::error::{FcpError, Result};
use crate::linalg::complete_orthonormal;
use crate::tensor::KruskalTensor;
use nalgebra::DMatrix;

/// `crib[n][r]`: bound on the squared angular error of `a_r^(n)` for noise
/// variance `sigma_sq`.
pub fn crib_numeric(k: &KruskalTensor, sigma_sq: f64) -> Result<Vec<Vec<f64>>> {
    let k = k.normalize()?;
    let order = k.order();
    let r = k.rank();
    let shape = k.shape();
    // factor vectors: mode 1 carries the weights
    let mut u: Vec<DMatrix<f64>> = k.factors().to_vec();
    for (j, &w) in k.weights().iter().enumerate() {
        u[0].column_mut(j).scale_mut(w);
    }
    let grams: Vec<DMatrix<f64>> = u.iter().map(|f| f.tr_mul(f)).collect();

    // local coordinates for every (mode, component)
    let basis: Vec<Vec<DMatrix<f64>>> = (0..order)
        .map(|n| {
            (0..r)
                .map(|j| {
                    if n == 0 {
                        DMatrix::identity(shape[0], shape[0])
                    } else {
                        let a = u[n].column(j).into_owned();
                        let full = complete_orthonormal(&DMatrix::from_column_slice(a.len(), 1, a.as_slice()), a.len());
                        full.columns(1, a.len() - 1).into_owned()
                    }
                })
                .collect()
        })
        .collect();
    let mut offsets = Vec::new();
    let mut size = 0;
    for n in 0..order {
        for j in 0..r {
            offsets.push(size);
            size += basis[n][j].ncols();
        }
    }
    let idx = |n: usize, j: usize| n * r + j;
    let prod_except = |a: usize, b: usize, p: usize, q: usize| -> f64 {
        (0..order).filter(|&k| k != p && k != q).map(|k| grams[k][(a, b)]).product()
    };

    let mut fim = DMatrix::<f64>::zeros(size, size);
    for n in 0..order {
        for m in n..order {
            for a in 0..r {
                for b in 0..r {
                    let ba = &basis[n][a];
                    let bb = &basis[m][b];
                    let block = if n == m {
                        ba.tr_mul(bb) * prod_except(a, b, n, n)
                    } else {
                        // (eᵀ u_b^(n)) (u_a^(m)ᵀ f)
                        let left = ba.tr_mul(&u[n].column(b));
                        let right = bb.tr_mul(&u[m].column(a));
                        left * right.transpose() * prod_except(a, b, n, m)
                    };
                    let (ra, cb) = (offsets[idx(n, a)], offsets[idx(m, b)]);
                    fim.view_mut((ra, cb), block.shape()).copy_from(&block);
                    if n != m || a != b {
                        fim.view_mut((cb, ra), (block.ncols(), block.nrows())).copy_from(&block.transpose());
                    }
                }
            }
        }
    }
    let chol = fim
        .cholesky()
        .ok_or_else(|| FcpError::Numeric("Fisher information is singular".into()))?;
    let cov = chol.inverse() * sigma_sq;

    let mut out = vec![vec![0.0; r]; order];
    for n in 0..order {
        for j in 0..r {
            let o = offsets[idx(n, j)];
            let d = basis[n][j].ncols();
            let block = cov.view((o, o), (d, d));
            out[n][j] = if n == 0 {
                let a = k.factor(0).column(j);
                let proj = DMatrix::<f64>::identity(d, d) - a * a.transpose();
                (&proj * block * &proj).trace() / (k.weights()[j] * k.weights()[j])
            } else {
                block.trace()
            };
        }
    }
    Ok(out)
}
