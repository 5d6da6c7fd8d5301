//! Noncentral Kronecker-sum Gaussian graphical models.
//!
//! Tensor-valued data whose precision is a Kronecker sum of per-axis
//! factors and whose mean is a Kronecker sum of per-axis vectors. The
//! estimator alternates a closed-form mean block with a proximal-gradient
//! precision solve.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod mean;
pub mod oracle;
pub mod params;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use eval::{EdgeSet, PRCurve, PRPoint};
pub use params::{IdentifiablePrecision, KSMean, KSPrecision};
pub use solver::{PrecisionSolver, ProxGradSolver, SolverConfig};
pub use tensor::Tensor;
