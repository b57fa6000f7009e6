//! Sharpness S(theta) = lambda_max of the Hessian, its sign-continuous top
//! eigenvector, the second eigenvalue, and the sharpness gradient
//! grad S = (grad^3 L)(u, u).
//!
//! The solver is shifted power iteration with deflation: at desk scale a
//! dense oracle validates it, and determinism matters more than speed.

use crate::error::{EosError, Result};
use crate::oracle::LossOracle;
use crate::vector::ParameterVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct EigSolverConfig {
    pub max_iters: usize,
    /// Relative residual tolerance: ||H u - lambda u|| <= tol * max(1, |lambda|).
    pub tol: f64,
    pub deflation: bool,
    /// Seeds the random start when no warm start is available.
    pub seed: u64,
}

impl Default for EigSolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-9,
            deflation: true,
            seed: 0,
        }
    }
}

/// Eigengap below this fraction of max(1, |lambda1|) means the top eigenvalue
/// is not unique to working tolerance and u(theta) is undefined.
pub const DEGENERATE_GAP_FRAC: f64 = 1e-8;

/// Spectral data at a point: sharpness, unit top eigenvector with a
/// trajectory-continuous sign, second eigenvalue, and grad S.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    pub sharpness: f64,
    pub u: ParameterVector,
    pub lambda2: f64,
    pub grad_sharpness: ParameterVector,
}

/// Largest eigenvalue and unit eigenvector of the Hessian at theta.
///
/// Power iteration runs on the shifted operator H + sigma I with sigma an
/// estimate of ||H|| from 10 plain power steps, so the algebraically largest
/// eigenvalue dominates in magnitude.
pub fn top_eigpair(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    cfg: &EigSolverConfig,
    warm_start: Option<&ParameterVector>,
) -> Result<(f64, ParameterVector)> {
    let apply = |v: &ParameterVector| oracle.hvp(theta, v);
    power_iterate_operator(&apply, oracle.dim(), cfg, warm_start)
}

/// Top eigenvalue of the deflated operator P_u^perp H P_u^perp.
pub fn second_eigenvalue(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    cfg: &EigSolverConfig,
    known: (f64, &ParameterVector),
) -> Result<f64> {
    let (lambda1, u) = known;

    // Positivity shift m >= ||H||: working on P (H + m I) P makes lambda_2 + m
    // the algebraically largest and dominant-in-magnitude eigenvalue on the
    // u-orthogonal complement, so neither lambda_min nor the projected-out
    // null direction can capture the iteration when lambda_2 < 0.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut v =
        ParameterVector::new((0..oracle.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())?
            .normalized()?;
    let mut m = lambda1.abs();
    for _ in 0..15 {
        let hv = oracle.hvp(theta, &v)?;
        m = m.max(v.dot(&hv).abs());
        match hv.normalized() {
            Ok(next) => v = next,
            Err(_) => break,
        }
    }
    let shift = 1.5 * m + 1e-6;

    let apply = |v: &ParameterVector| -> Result<ParameterVector> {
        let p = v.reject_from_unit(u);
        let hv = oracle.hvp(theta, &p)?;
        Ok(hv.reject_from_unit(u).axpy(shift, &p))
    };
    // Decorrelate the start vector from the top solve: when the top
    // eigenspace is degenerate, the converged u is exactly the projection of
    // the shared seeded start onto that eigenspace, leaving the start with
    // no component along the deflated twin direction. The deflated gap is
    // also often much smaller: same tolerance, larger iteration budget.
    let mut cfg2 = cfg.clone();
    cfg2.seed = cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    cfg2.max_iters = cfg.max_iters.saturating_mul(10);
    let (lam, _) = power_iterate_operator(&apply, oracle.dim(), &cfg2, None)?;
    Ok(lam - shift)
}

/// Resolves the eigenvector sign ambiguity by continuity: keep u_new unless
/// it points away from u_prev.
pub fn fix_sign(u_new: ParameterVector, u_prev: Option<&ParameterVector>) -> ParameterVector {
    match u_prev {
        Some(prev) if u_new.dot(prev) < 0.0 => u_new.scale(-1.0),
        _ => u_new,
    }
}

/// Composes the top pair (warm-started from `prev`), sign fixing, the second
/// eigenvalue, and grad S = (grad^3 L)(u, u).
///
/// At the first point of a trajectory (no `prev`) the sign is set so that
/// grad S . u >= 0 when that dot product is nonzero: arbitrary but
/// deterministic.
pub fn spectral_info(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    cfg: &EigSolverConfig,
    prev: Option<&SpectralInfo>,
) -> Result<SpectralInfo> {
    let (sharpness, u_raw) = top_eigpair(oracle, theta, cfg, prev.map(|p| &p.u))?;
    let mut u = fix_sign(u_raw, prev.map(|p| &p.u));
    let lambda2 = second_eigenvalue(oracle, theta, cfg, (sharpness, &u))?;
    let gap = sharpness - lambda2;
    let threshold = DEGENERATE_GAP_FRAC * sharpness.abs().max(1.0);
    if gap < threshold {
        return Err(EosError::DegenerateSpectrum { gap, threshold });
    }
    let grad_sharpness = oracle.third_contract(theta, &u, &u)?;
    if prev.is_none() {
        let align = grad_sharpness.dot(&u);
        if align < 0.0 {
            u = u.scale(-1.0);
        }
        // grad S = third(u, u) is even in u, so no recompute on flip.
    }
    Ok(SpectralInfo {
        sharpness,
        u,
        lambda2,
        grad_sharpness,
    })
}

/// Power iteration on an arbitrary symmetric operator; exposed so other
/// modules can run shifted/deflated variants without duplicating the loop.
pub fn power_iterate_operator(
    apply: &dyn Fn(&ParameterVector) -> Result<ParameterVector>,
    dim: usize,
    cfg: &EigSolverConfig,
    warm_start: Option<&ParameterVector>,
) -> Result<(f64, ParameterVector)> {
    let mut v = match warm_start {
        Some(w) => w.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            ParameterVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())?
                .normalized()?
        }
    };

    // Norm estimate for the shift: 10 plain power steps tracking the largest
    // |Rayleigh quotient| seen.
    let mut sigma = 0.0f64;
    for _ in 0..10 {
        let hv = apply(&v)?;
        sigma = sigma.max(v.dot(&hv).abs());
        match hv.normalized() {
            Ok(next) => v = next,
            Err(_) => break, // H v = 0: v is an exact null vector, keep it
        }
    }

    let mut last_residual = f64::INFINITY;
    for iter in 0..cfg.max_iters {
        let hv = apply(&v)?;
        let lambda = v.dot(&hv);
        let residual = hv.axpy(-lambda, &v).norm();
        if residual <= cfg.tol * lambda.abs().max(1.0) {
            return Ok((lambda, v));
        }
        last_residual = residual;
        // One step on the shifted operator; reuse hv.
        let shifted = hv.axpy(sigma, &v);
        v = shifted.normalized().map_err(|_| EosError::NoConvergence {
            iters: iter,
            residual,
        })?;
    }
    Err(EosError::NoConvergence {
        iters: cfg.max_iters,
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{QuadraticLoss, ToyLoss, ToyModelParams};

    fn cfg() -> EigSolverConfig {
        EigSolverConfig::default()
    }

    #[test]
    fn quadratic_diag_top_pair() {
        let q = QuadraticLoss::from_spectrum(&[1.0, 2.0, 5.0]).unwrap();
        let theta = ParameterVector::zeros(3);
        let (l1, u) = top_eigpair(&q, &theta, &cfg(), None).unwrap();
        assert!((l1 - 5.0).abs() < 1e-8);
        assert!((u[2].abs() - 1.0).abs() < 1e-8);
        let l2 = second_eigenvalue(&q, &theta, &cfg(), (l1, &u)).unwrap();
        assert!((l2 - 2.0).abs() < 1e-7);
    }

    #[test]
    fn toy_model_at_origin() {
        let toy = ToyLoss::new(ToyModelParams::new(0.01, 1.0, 1.0).unwrap(), 0.0).unwrap();
        let theta = ParameterVector::zeros(3);
        let info = spectral_info(&toy, &theta, &cfg(), None).unwrap();
        assert!((info.sharpness - 200.0).abs() < 1e-6);
        assert!((info.u[0].abs() - 1.0).abs() < 1e-8);
        assert!(info.lambda2.abs() < 1e-6);
        // grad S = (0, sqrt(beta), 0); e1 sign is free since grad S . u = 0.
        assert!((info.grad_sharpness[1] - 1.0).abs() < 1e-10);
        assert!(info.grad_sharpness[0].abs() < 1e-10);
    }

    #[test]
    fn sign_fixing() {
        let e1 = ParameterVector::basis(2, 0);
        let m1 = e1.scale(-1.0);
        assert_eq!(fix_sign(e1.clone(), Some(&m1)).as_slice(), &[-1.0, 0.0]);
        assert_eq!(fix_sign(e1.clone(), None).as_slice(), &[1.0, 0.0]);
        let a = ParameterVector::from_slice(&[0.8, 0.6]).unwrap();
        let b = ParameterVector::from_slice(&[0.6, 0.8]).unwrap();
        assert_eq!(fix_sign(a.clone(), Some(&b)).as_slice(), &[0.8, 0.6]);
    }

    #[test]
    fn degenerate_spectrum_detected() {
        let q = QuadraticLoss::from_spectrum(&[3.0, 3.0, 1.0]).unwrap();
        let theta = ParameterVector::zeros(3);
        let err = spectral_info(&q, &theta, &cfg(), None).unwrap_err();
        assert!(matches!(err, EosError::DegenerateSpectrum { .. }));
    }

    #[test]
    fn negative_definite_top() {
        // Top (algebraically largest) eigenvalue of a negative spectrum.
        let q = QuadraticLoss::from_spectrum(&[-5.0, -2.0, -1.0]).unwrap();
        let theta = ParameterVector::zeros(3);
        let (l1, u) = top_eigpair(&q, &theta, &cfg(), None).unwrap();
        assert!((l1 + 1.0).abs() < 1e-8, "lambda1 = {l1}");
        assert!((u[2].abs() - 1.0).abs() < 1e-7);
    }
}
