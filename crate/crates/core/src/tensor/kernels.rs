//! Multilinear kernels: Khatri-Rao, MTTKRP, mode Grams and mode products.
//!
//! All kernels view a tensor around mode `n` as a `left × I_n × right`
//! block where `left = ∏_{k<n} I_k` and `right = ∏_{k>n} I_k`. Each
//! `right`-slab is then a contiguous column-major `left × I_n` matrix.

use super::DenseTensor;
use crate::error::{invalid, Result};
use crate::exec::{chunk_ranges, Exec};
use nalgebra::{DMatrix, DMatrixView};
use std::borrow::Borrow;

const MAX_CHUNKS: usize = 16;

/// Khatri-Rao product with the first listed matrix varying fastest, i.e.
/// `khatri_rao([U1, U2, U3]) = U3 ⊙ U2 ⊙ U1`.
pub fn khatri_rao<M: Borrow<DMatrix<f64>>>(mats: &[M]) -> Result<DMatrix<f64>> {
    let Some(first) = mats.first() else {
        return invalid("khatri_rao needs at least one matrix");
    };
    let r = Borrow::<DMatrix<f64>>::borrow(first).ncols();
    for m in mats {
        let c = Borrow::<DMatrix<f64>>::borrow(m).ncols();
        if c != r {
            return invalid(format!("khatri_rao column mismatch: {c} vs {r}"));
        }
    }
    let mut acc = first.borrow().clone();
    for m in &mats[1..] {
        let m = m.borrow();
        let (p, q) = (acc.nrows(), m.nrows());
        let mut out = DMatrix::zeros(p * q, r);
        for c in 0..r {
            let a = acc.column(c);
            let mut col = out.column_mut(c);
            for j in 0..q {
                let s = m[(j, c)];
                for i in 0..p {
                    col[i + p * j] = a[i] * s;
                }
            }
        }
        acc = out;
    }
    Ok(acc)
}

fn split(shape: &[usize], n: usize) -> (usize, usize, usize) {
    let left = shape[..n].iter().product();
    let right = shape[n + 1..].iter().product();
    (left, shape[n], right)
}

fn check_factors(t: &DenseTensor, factors: &[DMatrix<f64>], n: usize) -> Result<usize> {
    if n >= t.order() {
        return invalid(format!("mode {} out of range for order {}", n + 1, t.order()));
    }
    if factors.len() != t.order() {
        return invalid(format!(
            "expected {} factor matrices, got {}",
            t.order(),
            factors.len()
        ));
    }
    let r = factors[0].ncols();
    for (k, f) in factors.iter().enumerate() {
        if f.ncols() != r {
            return invalid("factor matrices disagree on rank");
        }
        if k != n && f.nrows() != t.shape()[k] {
            return invalid(format!(
                "factor {} has {} rows, mode size is {}",
                k + 1,
                f.nrows(),
                t.shape()[k]
            ));
        }
    }
    Ok(r)
}

/// Mode-`n` matricization `I_n × ∏_{k≠n} I_k`, remaining modes in
/// increasing order with the lowest varying fastest.
pub fn mode_unfolding(t: &DenseTensor, n: usize) -> DMatrix<f64> {
    let (left, size, right) = split(t.shape(), n);
    let data = t.data();
    if left == 1 {
        return DMatrix::from_column_slice(size, right, data);
    }
    let mut out = DMatrix::zeros(size, left * right);
    for q in 0..right {
        let slab = &data[q * left * size..(q + 1) * left * size];
        for i in 0..size {
            for a in 0..left {
                out[(i, a + left * q)] = slab[a + left * i];
            }
        }
    }
    out
}

/// Matricized tensor times Khatri-Rao product:
/// `X_(n) · (⊙_{k≠n} A^(k))`, an `I_n × R` matrix. `factors[n]` is ignored
/// apart from its column count.
pub fn mttkrp(t: &DenseTensor, factors: &[DMatrix<f64>], n: usize) -> Result<DMatrix<f64>> {
    mttkrp_with(t, factors, n, Exec::default())
}

pub fn mttkrp_with(
    t: &DenseTensor,
    factors: &[DMatrix<f64>],
    n: usize,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    let r = check_factors(t, factors, n)?;
    let (left, size, right) = split(t.shape(), n);
    let data = t.data();
    let kl = if n > 0 { Some(khatri_rao(&factors[..n])?) } else { None };
    let kr = if n + 1 < factors.len() {
        Some(khatri_rao(&factors[n + 1..])?)
    } else {
        None
    };

    let ranges = chunk_ranges(right, MAX_CHUNKS);
    let parts: Vec<DMatrix<f64>> = match (&kl, &kr) {
        (None, None) => return Ok(DMatrix::from_column_slice(size, 1, data) * DMatrix::from_element(1, r, 1.0)),
        (None, Some(kr)) => {
            // X is I_n × right, contiguous
            exec.map(ranges.len(), |c| {
                let q = ranges[c].clone();
                let x = DMatrixView::from_slice(&data[q.start * size..q.end * size], size, q.len());
                x * kr.rows(q.start, q.len())
            })
        }
        (Some(kl), None) => {
            // X is left × I_n; chunk over the rows of X
            let rows = chunk_ranges(left, MAX_CHUNKS);
            let x = DMatrixView::from_slice(data, left, size);
            exec.map(rows.len(), |c| {
                let a = rows[c].clone();
                x.rows(a.start, a.len()).transpose() * kl.rows(a.start, a.len())
            })
        }
        (Some(kl), Some(kr)) => exec.map(ranges.len(), |c| {
            let q = ranges[c].clone();
            let mut m = DMatrix::zeros(size, r);
            if left >= q.len() {
                for qi in q.clone() {
                    let slab = DMatrixView::from_slice(
                        &data[qi * left * size..(qi + 1) * left * size],
                        left,
                        size,
                    );
                    let p = slab.transpose() * kl;
                    for j in 0..r {
                        m.column_mut(j).axpy(kr[(qi, j)], &p.column(j), 1.0);
                    }
                }
            } else {
                let x = DMatrixView::from_slice(
                    &data[q.start * left * size..q.end * left * size],
                    left * size,
                    q.len(),
                );
                let z = x * kr.rows(q.start, q.len());
                for j in 0..r {
                    let zc = z.column(j);
                    let zj = DMatrixView::from_slice(zc.as_slice(), left, size);
                    m.column_mut(j).copy_from(&zj.tr_mul(&kl.column(j)));
                }
            }
            m
        }),
    };
    let mut out = DMatrix::zeros(size, r);
    for p in parts {
        out += p;
    }
    Ok(out)
}

/// `X_(n) X_(n)ᵀ` without materializing the matricization.
pub fn mode_gram(t: &DenseTensor, n: usize, exec: Exec) -> DMatrix<f64> {
    let (left, size, right) = split(t.shape(), n);
    let data = t.data();
    let ranges = chunk_ranges(right, MAX_CHUNKS);
    let parts = exec.map(ranges.len(), |c| {
        let q = ranges[c].clone();
        if left == 1 {
            let x = DMatrixView::from_slice(&data[q.start * size..q.end * size], size, q.len());
            x * x.transpose()
        } else {
            // slabs side by side, then one product
            let mut s = DMatrix::zeros(size, left * q.len());
            for (k, qi) in q.enumerate() {
                let slab = DMatrixView::from_slice(
                    &data[qi * left * size..(qi + 1) * left * size],
                    left,
                    size,
                );
                s.columns_mut(k * left, left).copy_from(&slab.transpose());
            }
            &s * s.transpose()
        }
    });
    let mut out = DMatrix::zeros(size, size);
    for p in parts {
        out += p;
    }
    out
}

/// Mode-`n` product `t ×_n m` for `m` of size `J × I_n`.
pub fn ttm(t: &DenseTensor, m: &DMatrix<f64>, n: usize) -> Result<DenseTensor> {
    ttm_with(t, m, n, Exec::default())
}

pub fn ttm_with(t: &DenseTensor, m: &DMatrix<f64>, n: usize, exec: Exec) -> Result<DenseTensor> {
    if n >= t.order() {
        return invalid(format!("mode {} out of range", n + 1));
    }
    let (left, size, right) = split(t.shape(), n);
    if m.ncols() != size {
        return invalid(format!(
            "matrix has {} columns, mode {} has size {size}",
            m.ncols(),
            n + 1
        ));
    }
    let j = m.nrows();
    let data = t.data();
    let ranges = chunk_ranges(right, MAX_CHUNKS);
    let parts = exec.map(ranges.len(), |c| {
        let q = ranges[c].clone();
        if left == 1 {
            let x = DMatrixView::from_slice(&data[q.start * size..q.end * size], size, q.len());
            (m * x).as_slice().to_vec()
        } else {
            let mut out = Vec::with_capacity(left * j * q.len());
            for qi in q {
                let slab = DMatrixView::from_slice(
                    &data[qi * left * size..(qi + 1) * left * size],
                    left,
                    size,
                );
                out.extend_from_slice((slab * m.transpose()).as_slice());
            }
            out
        }
    });
    let mut shape = t.shape().to_vec();
    shape[n] = j;
    DenseTensor::new(shape, parts.concat())
}
