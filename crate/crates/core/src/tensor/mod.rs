//! Dense tensors, mode permutation and generalized unfolding.
//!
//! Storage is first-mode-fastest: element `(i_1, ..., i_N)` (0-based here)
//! lives at `i_1 + I_1 * (i_2 + I_2 * (i_3 + ...))`. Reshape, Khatri-Rao
//! products and the merged factors of an unfolded Kruskal tensor all rely on
//! this layout.

mod io;
mod kernels;
mod kruskal;
mod rule;
mod tucker;

pub use io::{read_kruskal, read_tensor, write_kruskal, write_tensor};
pub use kernels::{
    khatri_rao, mode_gram, mode_unfolding, mttkrp, mttkrp_with, ttm, ttm_with,
};
pub use kruskal::KruskalTensor;
pub(crate) use kruskal::normalize_parts;
pub use rule::UnfoldingRule;
pub use tucker::TuckerTensor;

use crate::error::{invalid, Result};
use crate::exec::{chunk_ranges, Exec};
use serde::{Deserialize, Serialize};

/// Order-N array of reals with explicit shape, column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return invalid("tensor shape must have at least one mode");
        }
        if shape.contains(&0) {
            return invalid(format!("mode sizes must be positive, got {shape:?}"));
        }
        let len = checked_volume(&shape)?;
        if len != data.len() {
            return invalid(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = checked_volume(&shape)?;
        Self::new(shape, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = checked_volume(&shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            advance(&mut idx, &shape);
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Column-major strides.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut offset = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            debug_assert!(i < n);
            offset += i * stride;
            stride *= n;
        }
        offset
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &DenseTensor) -> Result<f64> {
        if self.shape != other.shape {
            return invalid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Same linear data under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<DenseTensor> {
        let len = checked_volume(new_shape)?;
        if len != self.data.len() || new_shape.contains(&0) {
            return invalid(format!(
                "cannot reshape {:?} ({} values) into {:?}",
                self.shape,
                self.data.len(),
                new_shape
            ));
        }
        DenseTensor::new(new_shape.to_vec(), self.data.clone())
    }

    /// Mode permutation with a 0-based permutation `perm`: result mode `k`
    /// is source mode `perm[k]`.
    pub fn transpose(&self, perm: &[usize]) -> Result<DenseTensor> {
        self.transpose_with(perm, Exec::default())
    }

    pub fn transpose_with(&self, perm: &[usize], exec: Exec) -> Result<DenseTensor> {
        check_permutation(perm, self.order())?;
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides = self.strides();
        let step: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let len = self.data.len();
        let ranges = chunk_ranges(len, 32);
        let parts = exec.map(ranges.len(), |c| {
            let range = ranges[c].clone();
            let mut idx = unravel(range.start, &out_shape);
            let mut src: usize = idx.iter().zip(&step).map(|(i, s)| i * s).sum();
            let mut out = Vec::with_capacity(range.len());
            for _ in range {
                out.push(self.data[src]);
                // odometer advance with incremental source offset
                for k in 0..idx.len() {
                    idx[k] += 1;
                    src += step[k];
                    if idx[k] < out_shape[k] {
                        break;
                    }
                    src -= step[k] * out_shape[k];
                    idx[k] = 0;
                }
            }
            out
        });
        DenseTensor::new(out_shape, parts.concat())
    }

    /// Generalized unfolding: transpose to the concatenated rule order,
    /// then merge each group into one mode.
    pub fn unfold(&self, rule: &UnfoldingRule) -> Result<DenseTensor> {
        self.unfold_with(rule, Exec::default())
    }

    pub fn unfold_with(&self, rule: &UnfoldingRule, exec: Exec) -> Result<DenseTensor> {
        rule.validate(self.order())?;
        let transposed = self.transpose_with(&rule.permutation(), exec)?;
        let dims = rule.merged_sizes(&self.shape);
        DenseTensor::new(dims, transposed.data)
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, other: &DenseTensor, scale: f64) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return invalid("shape mismatch in add_scaled");
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        DenseTensor::new(self.shape.clone(), data)
    }
}

pub(crate) fn checked_volume(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).ok_or_else(|| {
        crate::error::FcpError::InvalidArgument(format!("shape {shape:?} overflows usize"))
    })
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(shape.len());
    let mut s = 1;
    for &n in shape {
        strides.push(s);
        s *= n;
    }
    strides
}

fn unravel(mut linear: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|&n| {
            let i = linear % n;
            linear /= n;
            i
        })
        .collect()
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

pub(crate) fn check_permutation(perm: &[usize], order: usize) -> Result<()> {
    if perm.len() != order {
        return invalid(format!(
            "permutation {perm:?} has length {}, tensor order is {order}",
            perm.len()
        ));
    }
    let mut seen = vec![false; order];
    for &p in perm {
        if p >= order || seen[p] {
            return invalid(format!("{perm:?} is not a permutation of 0..{order}"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Inverse of a 0-based permutation.
pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}
