//! Fast canonical polyadic decomposition of high-order tensors through
//! generalized unfolding.
//!
//! A tensor is unfolded to low order by merging groups of modes, the
//! unfolded tensor is decomposed by ALS, and the components of the original
//! order are recovered from the merged factors, either by rank-one
//! approximations or by low-rank splits refined with a structured ALS that
//! never forms the dense tensor.

pub mod error;
pub mod exec;
pub mod experiment;
pub mod fcp;
pub mod als;
pub mod crib;
pub mod linalg;
pub mod structured;
pub mod synth;
pub mod tensor;

pub use error::{FcpError, Result};
pub use exec::Exec;
pub use tensor::{DenseTensor, KruskalTensor, TuckerTensor, UnfoldingRule};
