//! Attention-kernel regression with a learned spectral preconditioner.
//!
//! The crate is organized around the pipeline it implements:
//!
//! 1. [`kernel`] — position-driven embeddings and the exponential attention
//!    kernel `G = exp(EE^T)`, plus the regularized regression objective.
//! 2. [`precond`] — covariance learning on random operator-driven directions
//!    via a shrinkage-regularized CCCP fixed-point iteration, producing the
//!    preconditioner `P = Σ*^{-1/2}`.
//! 3. [`solve`] — preconditioned conjugate gradient, gradient descent, and a
//!    dense Cholesky reference for `(λI + G)α = y`.
//! 4. [`cartography`] — synthetic radio fields, measurement sampling, map
//!    reconstruction, a Gaussian-process baseline, and evaluation metrics.
//!
//! Everything numeric is generic over the scalar type through [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases at the crate root fix `f64`, which is what the
//! benchmark harness uses throughout.

pub mod cartography;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod precond;
pub mod rng;
pub mod scalar;
pub mod solve;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the main pipeline types.
pub type SymMatrix = linalg::DenseSymMatrix<f64>;
pub type Eigen = linalg::EigenDecomposition<f64>;
pub type Positions = kernel::PositionSet<f64>;
pub type Embedding = kernel::EmbeddingMatrix<f64>;
pub type KernelSystem = kernel::AttentionKernelSystem<f64>;
pub type Directions = precond::DirectionSet<f64>;
pub type Sigma = precond::SigmaEstimate<f64>;
pub type LearnedPreconditioner = precond::Preconditioner<f64>;
pub type Report = solve::SolveReport<f64>;
