//! Loss-function contract up to third-order directional derivatives, plus the
//! built-in loss families used by the experiments.

mod fd;
mod mlp;
mod quadratic;
mod toy;

pub use fd::{fd_gradient, fd_hvp, fd_third_contract, h_grad, h_hvp, h_third};
pub use mlp::{Activation, Dataset, LossKind, MlpLoss};
pub use quadratic::QuadraticLoss;
pub use toy::{QuarticSign, ToyLoss, ToyModelParams};

use crate::error::{EosError, Result};
use crate::vector::ParameterVector;

/// What an oracle can answer analytically. Anything not analytic is served by
/// the central finite-difference fallbacks in [`fd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub analytic_grad: bool,
    pub analytic_hvp: bool,
    pub analytic_third: bool,
    pub batched: bool,
}

/// A loss function L together with its first three derivatives, exposed as
/// directional contractions. Oracles are immutable after construction and
/// safe to evaluate from multiple threads.
pub trait LossOracle: Sync + Send {
    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    /// L(theta)
    fn value(&self, theta: &ParameterVector) -> Result<f64>;

    /// grad L(theta)
    fn gradient(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        fd_gradient(self.as_dyn(), theta)
    }

    /// Hessian-vector product (grad^2 L)(theta) v.
    fn hvp(&self, theta: &ParameterVector, v: &ParameterVector) -> Result<ParameterVector> {
        fd_hvp(self.as_dyn(), theta, v)
    }

    /// Third-derivative contraction (grad^3 L)(theta)(v, w), as a vector.
    fn third_contract(
        &self,
        theta: &ParameterVector,
        v: &ParameterVector,
        w: &ParameterVector,
    ) -> Result<ParameterVector> {
        fd_third_contract(self.as_dyn(), theta, v, w)
    }

    /// Upcast used by the default finite-difference implementations.
    fn as_dyn(&self) -> &dyn LossOracle;
}

pub(crate) fn check_dim(oracle: &dyn LossOracle, theta: &ParameterVector) -> Result<()> {
    if theta.dim() != oracle.dim() {
        return Err(EosError::DimensionMismatch {
            expected: oracle.dim(),
            got: theta.dim(),
        });
    }
    Ok(())
}

pub(crate) fn finite_value(v: f64, context: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EosError::NonFinite {
            context: context.into(),
        })
    }
}

/// Declarative description of a built-in loss, the input to
/// [`make_builtin_loss`].
#[derive(Debug, Clone)]
pub enum LossSpec {
    Toy(ToyModelParams),
    /// Toy model plus a signed rho4 * x^4 / 24 term in the x coordinate.
    QuarticToy {
        params: ToyModelParams,
        rho4: f64,
        sign: QuarticSign,
    },
    /// 1/2 theta^T A theta given as a full symmetric matrix.
    Quadratic {
        matrix: Vec<Vec<f64>>,
    },
    /// 1/2 theta^T diag(spectrum) theta.
    QuadraticSpectrum {
        spectrum: Vec<f64>,
    },
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
        loss: LossKind,
        dataset: DatasetSpec,
        init_seed: u64,
    },
}

#[derive(Debug, Clone)]
pub enum DatasetSpec {
    /// Seedable synthetic data: Gaussian inputs, target sin(2*pi*x1) + 0.5*x2,
    /// binary labels by the sign of the same function.
    Synthetic { n: usize, seed: u64 },
    /// CSV with a header row, feature columns x0..xk and target column y.
    Csv { path: String },
}

/// Builds a [`LossOracle`] from a [`LossSpec`], with the maximal capability
/// flags the family supports.
pub fn make_builtin_loss(spec: &LossSpec) -> Result<Box<dyn LossOracle>> {
    match spec {
        LossSpec::Toy(params) => Ok(Box::new(ToyLoss::new(params.clone(), 0.0)?)),
        LossSpec::QuarticToy { params, rho4, sign } => {
            if *rho4 < 0.0 {
                return Err(EosError::Config("quartic_toy requires rho4 >= 0".into()));
            }
            let signed = match sign {
                QuarticSign::Subquadratic => -rho4,
                QuarticSign::Superquadratic => *rho4,
            };
            Ok(Box::new(ToyLoss::new(params.clone(), signed)?))
        }
        LossSpec::Quadratic { matrix } => Ok(Box::new(QuadraticLoss::from_matrix(matrix)?)),
        LossSpec::QuadraticSpectrum { spectrum } => {
            Ok(Box::new(QuadraticLoss::from_spectrum(spectrum)?))
        }
        LossSpec::Mlp {
            widths,
            activation,
            loss,
            dataset,
            init_seed,
        } => {
            let data = match dataset {
                DatasetSpec::Synthetic { n, seed } => {
                    let input_dim = *widths.first().ok_or_else(|| {
                        EosError::Config("mlp widths must be non-empty".into())
                    })?;
                    Dataset::synthetic(*n, input_dim, *seed, matches!(loss, LossKind::Logistic))
                }
                DatasetSpec::Csv { path } => Dataset::from_csv(path)?,
            };
            Ok(Box::new(MlpLoss::new(
                widths, *activation, *loss, data, *init_seed,
            )?))
        }
    }
}
