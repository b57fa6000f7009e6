//! `eos-lab check`: a fast built-in invariant suite over the numerical
//! kernels, for verifying a build without running a full experiment.

use eos_core::predicted::{
    generalized_predicted_step, predicted_step, taylor_at, PredictedState, Profile1D,
};
use eos_core::spectral::{spectral_info, top_eigpair, EigSolverConfig};
use eos_core::{
    LossOracle, ParameterVector, QuadraticLoss, RunConfig, ToyLoss, ToyModelParams,
};

type CheckResult = Result<(), String>;

fn toy(eta: f64, c4: f64) -> ToyLoss {
    ToyLoss::new(ToyModelParams::new(eta, 1.0, 1.0).unwrap(), c4).unwrap()
}

/// Analytic toy gradient against central differences.
fn gradient_consistency() -> CheckResult {
    let loss = toy(0.05, 0.3);
    let theta = ParameterVector::from_slice(&[0.11, -0.27, 0.41]).unwrap();
    let grad = loss.gradient(&theta).map_err(|e| e.to_string())?;
    let h = 1e-6;
    for i in 0..3 {
        let e = ParameterVector::basis(3, i);
        let plus = loss.value(&theta.axpy(h, &e)).unwrap();
        let minus = loss.value(&theta.axpy(-h, &e)).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        if (grad[i] - fd).abs() > 1e-5 * (1.0 + fd.abs()) {
            return Err(format!("coordinate {i}: analytic {} vs fd {fd}", grad[i]));
        }
    }
    Ok(())
}

/// Power iteration against a known diagonal spectrum.
fn eigensolver() -> CheckResult {
    let oracle = QuadraticLoss::from_spectrum(&[3.0, 1.0, 0.5, -2.0]).unwrap();
    let theta = ParameterVector::zeros(4);
    let cfg = EigSolverConfig::default();
    let (l1, u) = top_eigpair(&oracle, &theta, &cfg, None).map_err(|e| e.to_string())?;
    if (l1 - 3.0).abs() > 1e-8 {
        return Err(format!("lambda1 {l1}, expected 3"));
    }
    if (u[0].abs() - 1.0).abs() > 1e-7 {
        return Err(format!("top eigenvector misaligned: u[0] = {}", u[0]));
    }
    Ok(())
}

/// RK4 conserves the orbit potential.
fn ode_conservation() -> CheckResult {
    use eos_core::ode::{delta, integrate, OdeState};
    let (alpha, beta) = (1.0, 1.0);
    let state0 = OdeState {
        x: 0.1 * delta(alpha, beta),
        y: 0.0,
    };
    let samples = integrate(state0, alpha, beta, 5.0, 1e-3).map_err(|e| e.to_string())?;
    let g0 = samples[0].potential;
    let drift = samples
        .iter()
        .map(|s| (s.potential - g0).abs())
        .fold(0.0f64, f64::max);
    if drift > 1e-8 {
        return Err(format!("potential drift {drift:.3e} over t = 5"));
    }
    Ok(())
}

/// Short toy run: the constrained trajectory must sit on the manifold and
/// descend along the free coordinate at rate eta.
fn constrained_trajectory() -> CheckResult {
    let eta = 0.02;
    let loss = toy(eta, 0.0);
    let delta = 2.0f64.sqrt();
    let theta0 = ParameterVector::from_slice(&[0.01 * delta, 0.0, 0.0]).unwrap();
    let mut cfg = RunConfig::new(eta, 150).map_err(|e| e.to_string())?;
    cfg.track_flow = false;
    cfg.track_predicted = false;
    cfg.track_generalized = false;
    let res = eos_core::trajectory::run_experiment(&loss, &theta0, &cfg)
        .map_err(|e| e.to_string())?;
    if res.records.len() != 150 {
        return Err(format!("expected 150 records, got {}", res.records.len()));
    }
    for rec in &res.records {
        let expected = [0.0, 0.0, -eta * rec.t as f64];
        for i in 0..3 {
            if (rec.theta_dagger[i] - expected[i]).abs() > 1e-8 {
                return Err(format!(
                    "step {}: theta_dagger[{i}] = {} vs {}",
                    rec.t, rec.theta_dagger[i], expected[i]
                ));
            }
        }
        let residual = (rec.tq.sharpness - 2.0 / eta).abs();
        if residual > 1e-6 * (2.0 / eta) {
            return Err(format!("step {}: sharpness residual {residual:.3e}", rec.t));
        }
    }
    Ok(())
}

/// The generalized predicted step with a zero profile must reproduce the
/// standard predicted step bitwise.
fn zero_profile_reduction() -> CheckResult {
    let eta = 0.02;
    let loss = toy(eta, 0.0);
    let dagger = ParameterVector::zeros(3);
    let spec = spectral_info(&loss, &dagger, &EigSolverConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let tq = taylor_at(&loss, &dagger, &spec, eta).map_err(|e| e.to_string())?;
    let v0 = ParameterVector::from_slice(&[0.01, 0.02, 0.0]).unwrap();
    let state = PredictedState::initial(v0, &tq);
    let hvp = |v: &ParameterVector| loss.hvp(&dagger, v);
    let plain = predicted_step(&tq, &tq, &state, eta, &hvp).map_err(|e| e.to_string())?;
    let profile = Profile1D::zero(1.0, 9);
    let gen = generalized_predicted_step(&tq, &tq, &state, eta, &hvp, &profile)
        .map_err(|e| e.to_string())?;
    if plain.v_star.as_slice() != gen.v_star.as_slice() || plain.x_star != gen.x_star {
        return Err("zero-profile generalized step differs from plain step".to_string());
    }
    Ok(())
}

/// Runs every check, printing one line each; returns true when all pass.
pub fn run_checks() -> bool {
    let checks: [(&str, fn() -> CheckResult); 5] = [
        ("gradient consistency", gradient_consistency),
        ("eigensolver", eigensolver),
        ("ode conservation", ode_conservation),
        ("constrained trajectory", constrained_trajectory),
        ("zero-profile reduction", zero_profile_reduction),
    ];
    let mut all_ok = true;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("check {name}: PASS"),
            Err(msg) => {
                println!("check {name}: FAIL ({msg})");
                all_ok = false;
            }
        }
    }
    all_ok
}
