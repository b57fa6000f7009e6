//! Core algorithms for studying gradient descent at the edge of stability:
//! loss oracles with Hessian-vector products, sharpness spectral machinery,
//! the constrained (projected) trajectory, the predicted displacement
//! dynamics, the reduced 2-D ODE, and assumption diagnostics.

pub mod diagnostics;
pub mod error;
pub mod ode;
pub mod oracle;
pub mod predicted;
pub mod spectral;
pub mod trajectory;
pub mod vector;

pub use error::{EosError, Result};
pub use oracle::{
    make_builtin_loss, Activation, Capabilities, Dataset, DatasetSpec, LossKind, LossOracle,
    LossSpec, MlpLoss, QuadraticLoss, QuarticSign, ToyLoss, ToyModelParams,
};
pub use spectral::{EigSolverConfig, SpectralInfo};
pub use trajectory::{RunConfig, RunResult, StopReason, TrajectoryRecord};
pub use vector::ParameterVector;
