//! Tucker tensors with orthonormal factor matrices.

use super::{ttm_with, DenseTensor};
use crate::error::{invalid, Result};
use crate::exec::Exec;
use nalgebra::DMatrix;

/// `G ×_1 U^(1) ×_2 … ×_N U^(N)` with `U^(n)ᵀU^(n) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerTensor {
    core: DenseTensor,
    factors: Vec<DMatrix<f64>>,
}

impl TuckerTensor {
    pub fn new(core: DenseTensor, factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if factors.len() != core.order() {
            return invalid("one factor matrix per core mode is required");
        }
        for (n, u) in factors.iter().enumerate() {
            if u.ncols() != core.shape()[n] {
                return invalid(format!(
                    "factor {} has {} columns, core mode size is {}",
                    n + 1,
                    u.ncols(),
                    core.shape()[n]
                ));
            }
            let err = (u.tr_mul(u) - DMatrix::<f64>::identity(u.ncols(), u.ncols())).amax();
            if err > 1e-10 {
                return invalid(format!("factor {} is not orthonormal ({err:e})", n + 1));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    pub fn to_dense(&self) -> DenseTensor {
        self.to_dense_with(Exec::default())
    }

    pub fn to_dense_with(&self, exec: Exec) -> DenseTensor {
        let mut t = self.core.clone();
        for (n, u) in self.factors.iter().enumerate() {
            t = ttm_with(&t, u, n, exec).expect("conformal by construction");
        }
        t
    }
}
