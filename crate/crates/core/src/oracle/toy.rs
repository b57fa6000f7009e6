//! The 3-D toy loss with one unstable direction (x), one sharpness direction
//! (y), and one free descent direction (z):
//!
//! ```text
//! L(x, y, z) = (2/eta + sqrt(beta) y) x^2 / 2 - (alpha / sqrt(beta)) y + z + c4 x^4 / 24
//! ```
//!
//! Sign convention: the z term is `+z`, so that the directly differentiated
//! gradient has dL/dz = +1 and the constrained trajectory moves as
//! z(t) = -eta * t with monotonically decreasing loss. (Writing the term as
//! `-z` only relabels z -> -z; this orientation keeps the constrained
//! trajectory at (0, 0, -eta t).)
//!
//! c4 = 0 is the plain toy model; c4 < 0 makes the profile along x
//! sub-quadratic and c4 > 0 super-quadratic.

use super::{check_dim, finite_value, Capabilities, LossOracle};
use crate::error::{EosError, Result};
use crate::vector::ParameterVector;

#[derive(Debug, Clone)]
pub struct ToyModelParams {
    /// Learning rate embedded in the loss (sets the 2/eta curvature plateau).
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ToyModelParams {
    pub fn new(eta: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(EosError::Config("toy model requires eta > 0".into()));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(EosError::Config(
                "toy model requires alpha > 0 and beta > 0".into(),
            ));
        }
        Ok(Self { eta, alpha, beta })
    }
}

/// Direction of the optional quartic term in the x coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuarticSign {
    /// -rho4 x^4 / 24: the profile along u under-shoots its quadratic part.
    Subquadratic,
    /// +rho4 x^4 / 24.
    Superquadratic,
}

#[derive(Debug, Clone)]
pub struct ToyLoss {
    params: ToyModelParams,
    /// Signed coefficient of x^4 / 24.
    c4: f64,
}

impl ToyLoss {
    pub fn new(params: ToyModelParams, c4: f64) -> Result<Self> {
        if !c4.is_finite() {
            return Err(EosError::Config("quartic coefficient must be finite".into()));
        }
        Ok(Self { params, c4 })
    }

    pub fn params(&self) -> &ToyModelParams {
        &self.params
    }

    pub fn quartic_coeff(&self) -> f64 {
        self.c4
    }

    fn sqrt_beta(&self) -> f64 {
        self.params.beta.sqrt()
    }

    /// 2/eta + sqrt(beta) y, the sharpness seen in the x direction at x = 0.
    fn curvature(&self, y: f64) -> f64 {
        2.0 / self.params.eta + self.sqrt_beta() * y
    }
}

impl LossOracle for ToyLoss {
    fn dim(&self) -> usize {
        3
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            analytic_grad: true,
            analytic_hvp: true,
            analytic_third: true,
            batched: false,
        }
    }

    fn value(&self, theta: &ParameterVector) -> Result<f64> {
        check_dim(self, theta)?;
        let (x, y, z) = (theta[0], theta[1], theta[2]);
        let v = self.curvature(y) * x * x / 2.0 - self.params.alpha / self.sqrt_beta() * y
            + z
            + self.c4 * x.powi(4) / 24.0;
        finite_value(v, "toy value")
    }

    fn gradient(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        let (x, y) = (theta[0], theta[1]);
        let gx = self.curvature(y) * x + self.c4 * x.powi(3) / 6.0;
        let gy = self.sqrt_beta() * x * x / 2.0 - self.params.alpha / self.sqrt_beta();
        ParameterVector::new(vec![gx, gy, 1.0])
    }

    fn hvp(&self, theta: &ParameterVector, v: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        check_dim(self, v)?;
        let (x, y) = (theta[0], theta[1]);
        let sb = self.sqrt_beta();
        let hx = (self.curvature(y) + self.c4 * x * x / 2.0) * v[0] + sb * x * v[1];
        let hy = sb * x * v[0];
        ParameterVector::new(vec![hx, hy, 0.0])
    }

    fn third_contract(
        &self,
        theta: &ParameterVector,
        v: &ParameterVector,
        w: &ParameterVector,
    ) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        check_dim(self, v)?;
        check_dim(self, w)?;
        let sb = self.sqrt_beta();
        let x = theta[0];
        let tx = sb * (v[0] * w[1] + v[1] * w[0]) + self.c4 * x * v[0] * w[0];
        let ty = sb * v[0] * w[0];
        ParameterVector::new(vec![tx, ty, 0.0])
    }

    fn as_dyn(&self) -> &dyn LossOracle {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(eta: f64, alpha: f64, beta: f64) -> ToyLoss {
        ToyLoss::new(ToyModelParams::new(eta, alpha, beta).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn value_examples() {
        let l = toy(0.01, 1.0, 1.0);
        let origin = ParameterVector::zeros(3);
        assert_eq!(l.value(&origin).unwrap(), 0.0);
        let p = ParameterVector::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(l.value(&p).unwrap(), 100.0);
    }

    #[test]
    fn gradient_matches_direct_differentiation() {
        let l = toy(0.01, 1.0, 1.0);
        let x0 = 0.3;
        let p = ParameterVector::from_slice(&[x0, 0.0, 0.0]).unwrap();
        let g = l.gradient(&p).unwrap();
        assert!((g[0] - 200.0 * x0).abs() < 1e-12);
        assert!((g[1] - (x0 * x0 / 2.0 - 1.0)).abs() < 1e-12);
        // +1, not -1: see the sign-convention note in the module docs.
        assert_eq!(g[2], 1.0);
    }

    #[test]
    fn hvp_at_origin_is_rank_one() {
        let l = toy(0.01, 1.0, 1.0);
        let origin = ParameterVector::zeros(3);
        let e1 = ParameterVector::basis(3, 0);
        let h = l.hvp(&origin, &e1).unwrap();
        assert_eq!(h.as_slice(), &[200.0, 0.0, 0.0]);
    }

    #[test]
    fn third_contract_uu_is_grad_sharpness() {
        let l = toy(0.01, 1.0, 4.0);
        let origin = ParameterVector::zeros(3);
        let e1 = ParameterVector::basis(3, 0);
        let t = l.third_contract(&origin, &e1, &e1).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ToyModelParams::new(0.01, 0.0, 1.0).is_err());
        assert!(ToyModelParams::new(0.01, 1.0, -1.0).is_err());
        assert!(ToyModelParams::new(0.0, 1.0, 1.0).is_err());
    }
}
