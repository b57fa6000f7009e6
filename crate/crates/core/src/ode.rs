//! The reduced 2-D system for the |x| envelope and the sharpness offset:
//!
//! ```text
//! X'(t) = X(t) Y(t),    Y'(t) = alpha - beta X(t)^2 / 2
//! ```
//!
//! The system has the unique fixed point (delta, 0) with
//! delta = sqrt(2 alpha / beta), conserves
//! g(X, Y) = h(beta X^2 / (2 alpha)) + Y^2 / alpha with h(z) = z - log z - 1,
//! and (after a change of variables) is a Lotka-Volterra predator-prey model;
//! we use the conserved potential directly rather than that form.

use crate::error::{EosError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeState {
    /// |x| envelope; the exact flow preserves X > 0.
    pub x: f64,
    /// Sharpness offset from 2/eta.
    pub y: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeSample {
    pub t: f64,
    pub state: OdeState,
    pub potential: f64,
}

pub fn delta(alpha: f64, beta: f64) -> f64 {
    (2.0 * alpha / beta).sqrt()
}

pub fn ode_rhs(state: OdeState, alpha: f64, beta: f64) -> (f64, f64) {
    (
        state.x * state.y,
        alpha - beta * state.x * state.x / 2.0,
    )
}

/// Conserved potential g(X, Y); requires X > 0.
pub fn potential(state: OdeState, alpha: f64, beta: f64) -> Result<f64> {
    if state.x <= 0.0 {
        return Err(EosError::Domain(format!(
            "potential requires X > 0, got {}",
            state.x
        )));
    }
    let z = beta * state.x * state.x / (2.0 * alpha);
    Ok(z - z.ln() - 1.0 + state.y * state.y / alpha)
}

/// Classical fixed-step RK4; the trajectory is sampled at every step.
/// Errors with `StepTooLarge` if any step drives X to zero or below.
pub fn integrate(
    state0: OdeState,
    alpha: f64,
    beta: f64,
    t_end: f64,
    h: f64,
) -> Result<Vec<OdeSample>> {
    if !(h > 0.0 && t_end > 0.0) {
        return Err(EosError::Domain("integrate requires h > 0, t_end > 0".into()));
    }
    if state0.x <= 0.0 {
        return Err(EosError::Domain("integrate requires X(0) > 0".into()));
    }
    let n_steps = (t_end / h).ceil() as usize;
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut state = state0;
    samples.push(OdeSample {
        t: 0.0,
        state,
        potential: potential(state, alpha, beta)?,
    });
    for step in 1..=n_steps {
        state = rk4_step(state, alpha, beta, h);
        let t = step as f64 * h;
        if state.x <= 0.0 {
            return Err(EosError::StepTooLarge { x: state.x, t });
        }
        samples.push(OdeSample {
            t,
            state,
            potential: potential(state, alpha, beta)?,
        });
    }
    Ok(samples)
}

fn rk4_step(state: OdeState, alpha: f64, beta: f64, h: f64) -> OdeState {
    let f = |s: OdeState| ode_rhs(s, alpha, beta);
    let at = |s: OdeState, k: (f64, f64), c: f64| OdeState {
        x: s.x + c * k.0,
        y: s.y + c * k.1,
    };
    let k1 = f(state);
    let k2 = f(at(state, k1, h / 2.0));
    let k3 = f(at(state, k2, h / 2.0));
    let k4 = f(at(state, k3, h));
    OdeState {
        x: state.x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y: state.y + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    }
}

/// Size bounds for the orbit through (X(0), 0) with 0 < X(0) < delta,
/// from the corollary form X_max <~ delta sqrt(log(delta/X(0))) and
/// |Y|_max <~ sqrt(alpha log(delta/X(0))) with the implementation constant
/// C = 2 standing in for the hidden constants.
pub fn excursion_bounds(state0: OdeState, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let d = delta(alpha, beta);
    if !(state0.x > 0.0 && state0.x < d) {
        return Err(EosError::Domain(format!(
            "excursion_bounds requires 0 < X(0) < delta = {d}, got {}",
            state0.x
        )));
    }
    const C: f64 = 2.0;
    let log_ratio = (d / state0.x).ln();
    Ok((C * d * log_ratio.sqrt(), C * (alpha * log_ratio).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rhs_examples() {
        let d = delta(1.0, 1.0);
        let (dx0, dy0) = ode_rhs(OdeState { x: d, y: 0.0 }, 1.0, 1.0);
        assert!(dx0 == 0.0 && dy0.abs() < 1e-15);
        let (dx, dy) = ode_rhs(OdeState { x: d, y: 1.0 }, 1.0, 1.0);
        assert!((dx - d).abs() < 1e-15 && dy.abs() < 1e-15);
        assert_eq!(ode_rhs(OdeState { x: 2.0, y: 0.0 }, 1.0, 1.0), (0.0, -1.0));
    }

    #[test]
    fn potential_examples() {
        let d = delta(1.0, 1.0);
        assert!(potential(OdeState { x: d, y: 0.0 }, 1.0, 1.0).unwrap().abs() < 1e-15);
        let g = potential(OdeState { x: 2.0f64.sqrt(), y: 1.0 }, 1.0, 1.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        assert!(potential(OdeState { x: 0.0, y: 0.0 }, 1.0, 1.0).is_err());
    }

    #[test]
    fn fixed_point_is_stationary() {
        let d = delta(1.0, 1.0);
        let samples = integrate(OdeState { x: d, y: 0.0 }, 1.0, 1.0, 100.0, 1e-2).unwrap();
        for s in samples {
            assert!((s.state.x - d).abs() < 1e-12 && s.state.y.abs() < 1e-12);
        }
    }

    #[test]
    fn potential_is_conserved() {
        let samples = integrate(OdeState { x: 0.1, y: 0.0 }, 1.0, 1.0, 20.0, 1e-3).unwrap();
        let g0 = samples[0].potential;
        for s in &samples {
            assert!((s.potential - g0).abs() < 1e-8 * 20.0 * g0.max(1.0));
        }
    }

    #[test]
    fn orbit_closes() {
        // Detect the return to the start: Y crosses 0 upward with X < delta.
        let samples = integrate(OdeState { x: 0.1, y: 0.0 }, 1.0, 1.0, 50.0, 1e-4).unwrap();
        let d = delta(1.0, 1.0);
        let mut best: Option<&OdeSample> = None;
        for pair in samples.windows(2).skip(10_000) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.state.y < 0.0 && b.state.y >= 0.0 && b.state.x < d {
                best = Some(b);
                break;
            }
        }
        let ret = best.expect("orbit did not return within t_end");
        assert!((ret.state.x - 0.1).abs() < 1e-6 && ret.state.y.abs() < 1e-3);
    }

    #[test]
    fn excursion_domain() {
        assert!(excursion_bounds(OdeState { x: 2.0, y: 0.0 }, 1.0, 1.0).is_err());
        let (bx, by) = excursion_bounds(OdeState { x: 0.1, y: 0.0 }, 1.0, 1.0).unwrap();
        assert!(bx > 0.0 && by > 0.0);
    }
}
