//! Generalized tensor-formulation hyperspectral super-resolution.
//!
//! Fuses a low-resolution hyperspectral image with a high-resolution
//! multispectral image under a general (not necessarily separable) blur by
//! Kronecker-decomposing the spatial degradation and estimating a
//! block-group-sparse Tucker model of the target.

pub mod degradation;
pub mod error;
pub mod io;
pub mod kronecker;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod solver;
pub mod sparsity;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use tensor::{DenseTensor, TuckerFactors};
