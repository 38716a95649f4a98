//! Adaptive-lasso estimation for the partially linear model `Y = Xᵀβ + g(T) + ε`.
//!
//! The nonparametric part is removed by Nadaraya–Watson smoothing in `T`
//! ([`smoothing`]), leaving a weighted-ℓ1 least-squares problem that is solved
//! on its dual with a semismooth Newton augmented Lagrangian method
//! ([`ssnal`], inner solver in [`ssn`]) or with ADMM ([`admm`]).
//! [`model_select`] builds adaptive weights and walks the λ path,
//! [`datagen`] produces the simulation designs, and [`bench`] runs and
//! reports repeated experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod admm;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod model_select;
pub mod par;
pub mod problem;
pub mod prox;
pub mod smoothing;
pub mod ssn;
pub mod ssnal;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use problem::TransformedProblem;
pub use prox::BoxRadii;
pub use smoothing::{EpanechnikovSmoother, KernelWeights, RawSample, SampleSmoother};
pub use ssnal::{SolveOptions, SolveReport};
