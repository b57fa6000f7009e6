use thiserror::Error;

/// Errors shared across the library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum EosError {
    /// A loss, gradient, or derivative evaluation produced NaN or Inf.
    #[error("non-finite value encountered at {context}")]
    NonFinite { context: String },

    /// Invalid configuration (unknown loss family, bad dimensions, ...).
    #[error("config error: {0}")]
    Config(String),

    /// The eigensolver did not reach the residual tolerance.
    #[error("eigensolver did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    /// The top eigenvalue is not unique up to tolerance, so u(theta) and
    /// S(theta) are not well defined.
    #[error("degenerate spectrum: top eigengap {gap:.3e} below threshold {threshold:.3e}")]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    /// The linearized projection failed to land on the constraint set.
    #[error(
        "projection diverged: sharpness residual {sharpness_residual:.3e}, \
         gradient alignment residual {alignment_residual:.3e}"
    )]
    ProjectionDiverged {
        sharpness_residual: f64,
        alignment_residual: f64,
    },

    /// The ODE integrator drove X to zero or below; the step size is too coarse.
    #[error("ODE step too large: X = {x:.3e} <= 0 at t = {t:.6}")]
    StepTooLarge { x: f64, t: f64 },

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The predicted coordinate left the sampled range of the 1-D profile.
    #[error("profile range exceeded: |x| = {x:.3e} > halfwidth {halfwidth:.3e}")]
    ProfileRangeExceeded { x: f64, halfwidth: f64 },

    /// Mismatched vector dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, EosError>;
