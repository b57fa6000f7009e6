//! Central finite-difference fallbacks for oracles that lack an analytic
//! derivative. Step sizes scale with the infinity norm of theta to balance
//! truncation against roundoff at 64-bit precision.

use super::LossOracle;
use crate::error::Result;
use crate::vector::ParameterVector;

pub fn h_grad(theta: &ParameterVector) -> f64 {
    1e-5 * (1.0 + theta.norm_inf())
}

pub fn h_hvp(theta: &ParameterVector) -> f64 {
    1e-4 * (1.0 + theta.norm_inf())
}

pub fn h_third(theta: &ParameterVector) -> f64 {
    1e-3 * (1.0 + theta.norm_inf())
}

/// Central differences of the loss, coordinate by coordinate.
pub fn fd_gradient(oracle: &dyn LossOracle, theta: &ParameterVector) -> Result<ParameterVector> {
    let h = h_grad(theta);
    let d = theta.dim();
    let mut g = Vec::with_capacity(d);
    for i in 0..d {
        let e = ParameterVector::basis(d, i);
        let plus = oracle.value(&theta.axpy(h, &e))?;
        let minus = oracle.value(&theta.axpy(-h, &e))?;
        g.push((plus - minus) / (2.0 * h));
    }
    ParameterVector::new(g)
}

/// Central difference of gradients in direction v.
pub fn fd_hvp(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    v: &ParameterVector,
) -> Result<ParameterVector> {
    let h = h_hvp(theta) / v.norm().max(1.0);
    let plus = oracle.gradient(&theta.axpy(h, v))?;
    let minus = oracle.gradient(&theta.axpy(-h, v))?;
    plus.sub(&minus)
        .scale(1.0 / (2.0 * h))
        .check_finite("fd_hvp")
}

/// Central difference of Hessian-vector products in direction w:
/// (grad^2 L(theta + h w) v - grad^2 L(theta - h w) v) / (2h).
pub fn fd_third_contract(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    v: &ParameterVector,
    w: &ParameterVector,
) -> Result<ParameterVector> {
    let h = h_third(theta) / w.norm().max(1.0);
    let plus = oracle.hvp(&theta.axpy(h, w), v)?;
    let minus = oracle.hvp(&theta.axpy(-h, w), v)?;
    plus.sub(&minus)
        .scale(1.0 / (2.0 * h))
        .check_finite("fd_third_contract")
}
