//! The three trajectories under comparison — gradient descent, gradient
//! flow, and the constrained trajectory — plus instability detection, the
//! time shift, and the full co-evolution loop.

use crate::error::{EosError, Result};
use crate::oracle::LossOracle;
use crate::predicted::{
    generalized_predicted_step, predicted_loss, predicted_sharpness, predicted_step, profile_1d,
    taylor_at, PredictedState, Profile1D, TaylorQuantities,
};
use crate::spectral::{fix_sign, second_eigenvalue, spectral_info, top_eigpair, EigSolverConfig, SpectralInfo};
use crate::vector::ParameterVector;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub eta: f64,
    pub max_steps: usize,
    /// Stop once lambda_2 at theta_dagger reaches this fraction of 1/eta.
    pub stop_lambda2_frac: f64,
    pub projection_substeps: usize,
    /// RK4 substeps per unit eta of gradient-flow time.
    pub flow_substeps: usize,
    /// Full projection is only attempted once S(theta) is within this
    /// relative margin of 2/eta.
    pub detection_margin: f64,
    /// Budget of plain GD steps for instability detection (phase 1).
    pub detect_max_steps: usize,
    pub track_flow: bool,
    pub track_predicted: bool,
    pub track_generalized: bool,
    /// Profile scan halfwidth in units of delta_t.
    pub profile_halfwidth_deltas: f64,
    pub profile_samples: usize,
    pub eig: EigSolverConfig,
}

impl RunConfig {
    pub fn new(eta: f64, max_steps: usize) -> Result<Self> {
        let cfg = Self {
            eta,
            max_steps,
            stop_lambda2_frac: 1.9,
            projection_substeps: 3,
            flow_substeps: 4,
            detection_margin: 0.05,
            detect_max_steps: 10_000,
            track_flow: true,
            track_predicted: true,
            track_generalized: true,
            profile_halfwidth_deltas: 4.0,
            profile_samples: 41,
            eig: EigSolverConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(EosError::Config("eta must be a positive finite real".into()));
        }
        if !(self.stop_lambda2_frac > 0.0 && self.stop_lambda2_frac < 2.0) {
            return Err(EosError::Config("stop_lambda2_frac must lie in (0, 2)".into()));
        }
        if self.projection_substeps == 0 || self.flow_substeps == 0 {
            return Err(EosError::Config("substep counts must be >= 1".into()));
        }
        if self.profile_samples < 9 || self.profile_samples % 2 == 0 {
            return Err(EosError::Config("profile_samples must be odd and >= 9".into()));
        }
        Ok(())
    }
}

/// One logged step of a run. Scalars that a disabled tracker would have
/// produced are NaN.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub theta: ParameterVector,
    pub theta_dagger: ParameterVector,
    pub theta_flow: Option<ParameterVector>,
    pub loss: f64,
    pub loss_dagger: f64,
    pub loss_flow: f64,
    /// S at the GD iterate theta_t.
    pub sharpness_gd: f64,
    /// lambda_2 at theta_dagger_t (the stopping-rule quantity).
    pub lambda2: f64,
    /// Taylor quantities at theta_dagger_t.
    pub tq: TaylorQuantities,
    pub x: f64,
    pub y: f64,
    pub x_star: f64,
    pub y_star: f64,
    /// Full predicted displacement, when the tracker is alive.
    pub v_star: Option<ParameterVector>,
    pub pred_loss: f64,
    pub pred_sharp: f64,
    pub gen_x_star: f64,
    pub gen_y_star: f64,
    pub gen_pred_loss: f64,
    pub gen_pred_sharp: f64,
    /// ||theta - theta_dagger||.
    pub dev_norm: f64,
    /// ||theta - theta_dagger - v*||.
    pub dev_pred: f64,
    /// Assumption 3.1 violated at this step (alpha <= 0).
    pub alpha_nonpositive: bool,
}

#[derive(Debug, Clone)]
pub enum StopReason {
    MaxSteps,
    Lambda2Threshold { step: usize, lambda2: f64 },
    /// Phase 1 exhausted its budget without the projected sharpness
    /// reaching 2/eta.
    NeverUnstable,
    Aborted { step: usize, message: String },
}

#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<TrajectoryRecord>,
    /// Plain GD steps consumed before the time shift (t = 0).
    pub detection_steps: usize,
    pub stop: StopReason,
    /// Step at which the predicted dynamics stopped being computable.
    pub prediction_breakdown: Option<usize>,
    pub generalized_breakdown: Option<usize>,
}

pub fn gd_step(oracle: &dyn LossOracle, theta: &ParameterVector, eta: f64) -> Result<ParameterVector> {
    let grad = oracle.gradient(theta)?;
    theta.axpy(-eta, &grad).check_finite("gd_step")
}

/// RK4 integration of d theta / ds = -grad L over time eta.
pub fn flow_step(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    eta: f64,
    substeps: usize,
) -> Result<ParameterVector> {
    assert!(substeps >= 1);
    let h = eta / substeps as f64;
    let mut th = theta.clone();
    for _ in 0..substeps {
        let k1 = oracle.gradient(&th)?.scale(-1.0);
        let k2 = oracle.gradient(&th.axpy(h / 2.0, &k1))?.scale(-1.0);
        let k3 = oracle.gradient(&th.axpy(h / 2.0, &k2))?.scale(-1.0);
        let k4 = oracle.gradient(&th.axpy(h, &k3))?.scale(-1.0);
        th = th
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
    }
    th.check_finite("flow_step")
}

/// Linearized projection onto M = { S <= 2/eta, u . grad L = 0 }:
/// `projection_substeps` rounds of eigen refresh, sharpness correction along
/// -grad S (S - 2/eta)/||grad S||^2 when the constraint is active, and a
/// Newton step along u; post-conditions are checked at the final point.
pub fn project_to_manifold(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    cfg: &RunConfig,
    prev_spectral: Option<&SpectralInfo>,
) -> Result<(ParameterVector, SpectralInfo)> {
    let target = 2.0 / cfg.eta;
    let mut th = theta.clone();
    let mut u_warm = prev_spectral.map(|p| p.u.clone());
    for _ in 0..cfg.projection_substeps {
        let (s, u_raw) = top_eigpair(oracle, &th, &cfg.eig, u_warm.as_ref())?;
        let u = fix_sign(u_raw, u_warm.as_ref());
        // Signed linearized correction: also pulls S back up when a previous
        // Newton step overshot below 2/eta, which the one-sided variant can
        // never repair.
        let grad_s = oracle.third_contract(&th, &u, &u)?;
        let ns2 = grad_s.dot(&grad_s);
        if ns2 > 0.0 {
            th = th.axpy(-(s - target) / ns2, &grad_s);
        }
        let grad = oracle.gradient(&th)?;
        th = th.axpy(-u.dot(&grad) / s, &u);
        th = th.check_finite("project_to_manifold")?;
        u_warm = Some(u);
    }

    let warm_info = u_warm.map(|u| SpectralInfo {
        sharpness: target,
        u,
        lambda2: f64::NAN,
        grad_sharpness: ParameterVector::zeros(oracle.dim()),
    });
    let info = spectral_info(oracle, &th, &cfg.eig, warm_info.as_ref().or(prev_spectral))?;
    let grad = oracle.gradient(&th)?;
    let sharpness_residual = (info.sharpness - target).abs();
    let alignment_residual = info.u.dot(&grad).abs();
    if sharpness_residual > 1e-6 * target || alignment_residual > 1e-6 * grad.norm() {
        return Err(EosError::ProjectionDiverged {
            sharpness_residual,
            alignment_residual,
        });
    }
    Ok((th, info))
}

/// One step of the constrained trajectory: GD step followed by projection.
pub fn constrained_step(
    oracle: &dyn LossOracle,
    theta_dagger: &ParameterVector,
    cfg: &RunConfig,
    prev_spectral: Option<&SpectralInfo>,
) -> Result<(ParameterVector, SpectralInfo)> {
    let stepped = gd_step(oracle, theta_dagger, cfg.eta)?;
    project_to_manifold(oracle, &stepped, cfg, prev_spectral)
}

/// Projection onto the gradient-alignment constraint only (no sharpness
/// correction). Used during detection: S at this point tells whether the
/// sharpness constraint of the true projection would be active.
fn project_gradient_only(
    oracle: &dyn LossOracle,
    theta: &ParameterVector,
    cfg: &RunConfig,
    u_warm: &ParameterVector,
) -> Result<(ParameterVector, f64, ParameterVector)> {
    let mut th = theta.clone();
    let mut u_prev = u_warm.clone();
    for _ in 0..cfg.projection_substeps {
        let (s, u_raw) = top_eigpair(oracle, &th, &cfg.eig, Some(&u_prev))?;
        let u = fix_sign(u_raw, Some(&u_prev));
        let grad = oracle.gradient(&th)?;
        th = th.axpy(-u.dot(&grad) / s, &u);
        u_prev = u;
    }
    let (s, u_raw) = top_eigpair(oracle, &th, &cfg.eig, Some(&u_prev))?;
    let u = fix_sign(u_raw, Some(&u_prev));
    Ok((th, s, u))
}

struct StepState {
    theta: ParameterVector,
    flow: Option<ParameterVector>,
    dagger: ParameterVector,
    spec_dagger: SpectralInfo,
    tq: TaylorQuantities,
    u_gd: ParameterVector,
    predicted: Option<PredictedState>,
    generalized: Option<PredictedState>,
}

/// Full experiment: phase 1 detects instability with plain GD; phase 2
/// co-evolves GD, gradient flow, the constrained trajectory, and the
/// predicted dynamics until max_steps or the lambda_2 stopping rule.
/// Trajectory-level errors abort with the partial log annotated in `stop`.
pub fn run_experiment(
    oracle: &dyn LossOracle,
    theta_init: &ParameterVector,
    cfg: &RunConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let target = 2.0 / cfg.eta;
    let check_threshold = target * (1.0 - cfg.detection_margin);

    // Phase 1: plain GD, watching the cheap sharpness estimate, escalating
    // to the gradient-only projection when within the margin.
    let mut theta = theta_init.clone();
    let mut u_gd: Option<ParameterVector> = None;
    let mut phase1: Vec<(ParameterVector, f64, f64, ParameterVector)> = Vec::new();
    let mut detected: Option<usize> = None;
    for raw_t in 0..=cfg.detect_max_steps {
        let (s, u_raw) = top_eigpair(oracle, &theta, &cfg.eig, u_gd.as_ref())?;
        let u = fix_sign(u_raw, u_gd.as_ref());
        let loss = oracle.value(&theta)?;
        phase1.push((theta.clone(), loss, s, u.clone()));
        u_gd = Some(u.clone());
        if s >= check_threshold {
            let (_, s_proj, _) = project_gradient_only(oracle, &theta, cfg, &u)?;
            // Same relative tolerance as the manifold residuals.
            if s_proj >= target * (1.0 - 1e-6) {
                detected = Some(raw_t);
                break;
            }
        }
        if raw_t == cfg.detect_max_steps {
            break;
        }
        theta = gd_step(oracle, &theta, cfg.eta)?;
    }

    let Some(detection_steps) = detected else {
        return Ok(stable_run_result(oracle, cfg, &phase1)?);
    };

    // Time shift: this GD iterate is theta_0.
    let (dagger0, spec0) = project_to_manifold(oracle, &theta, cfg, None)?;
    let tq0 = taylor_at(oracle, &dagger0, &spec0, cfg.eta)?;
    let v0 = theta.sub(&dagger0);
    let predicted0 = cfg.track_predicted.then(|| PredictedState::initial(v0.clone(), &tq0));
    let generalized0 = cfg.track_generalized.then(|| PredictedState::initial(v0, &tq0));

    let mut st = StepState {
        flow: cfg.track_flow.then(|| theta.clone()),
        theta,
        dagger: dagger0,
        spec_dagger: spec0,
        tq: tq0,
        u_gd: u_gd.unwrap(),
        predicted: predicted0,
        generalized: generalized0,
    };

    let mut records = Vec::new();
    let mut stop = StopReason::MaxSteps;
    let mut prediction_breakdown = None;
    let mut generalized_breakdown = None;

    for t in 0..cfg.max_steps {
        // Evenized profile at theta_dagger_t, shared by the generalized step
        // and its sharpness prediction.
        let profile = match build_profile(oracle, cfg, &st) {
            Ok(p) => p,
            Err(e) => {
                if st.generalized.take().is_some() {
                    generalized_breakdown.get_or_insert(t);
                }
                drop(e);
                None
            }
        };

        match log_record(oracle, cfg, &st, t, profile.as_ref()) {
            Ok(rec) => records.push(rec),
            Err(e) => {
                stop = StopReason::Aborted { step: t, message: e.to_string() };
                break;
            }
        }

        if st.spec_dagger.lambda2 >= cfg.stop_lambda2_frac / cfg.eta {
            stop = StopReason::Lambda2Threshold { step: t, lambda2: st.spec_dagger.lambda2 };
            break;
        }
        if t + 1 == cfg.max_steps {
            break;
        }

        match advance(oracle, cfg, &mut st, profile.as_ref()) {
            Ok(AdvanceNote { predicted_failed, generalized_failed }) => {
                if predicted_failed {
                    prediction_breakdown.get_or_insert(t + 1);
                }
                if generalized_failed {
                    generalized_breakdown.get_or_insert(t + 1);
                }
            }
            Err(e) => {
                stop = StopReason::Aborted { step: t + 1, message: e.to_string() };
                break;
            }
        }
    }

    Ok(RunResult {
        records,
        detection_steps,
        stop,
        prediction_breakdown,
        generalized_breakdown,
    })
}

fn build_profile(
    oracle: &dyn LossOracle,
    cfg: &RunConfig,
    st: &StepState,
) -> Result<Option<Profile1D>> {
    let Some(gen) = &st.generalized else { return Ok(None) };
    let halfwidth = cfg.profile_halfwidth_deltas * st.tq.delta.max(gen.x_star.abs()).max(1e-8);
    let p = profile_1d(oracle, &st.dagger, &st.tq.u, cfg.eta, halfwidth, cfg.profile_samples)?;
    Ok(Some(p.even_part()))
}

fn log_record(
    oracle: &dyn LossOracle,
    cfg: &RunConfig,
    st: &StepState,
    t: usize,
    profile: Option<&Profile1D>,
) -> Result<TrajectoryRecord> {
    let loss = oracle.value(&st.theta)?;
    let loss_dagger = oracle.value(&st.dagger)?;
    let loss_flow = match &st.flow {
        Some(f) => oracle.value(f)?,
        None => f64::NAN,
    };
    let (sharpness_gd, _) = top_eigpair(oracle, &st.theta, &cfg.eig, Some(&st.u_gd))?;
    let v = st.theta.sub(&st.dagger);
    let x = st.tq.u.dot(&v);
    let y = st.tq.grad_s_perp.dot(&v);

    let (x_star, y_star, v_star, pred_loss, pred_sharp, dev_pred) = match &st.predicted {
        Some(p) => (
            p.x_star,
            p.y_star,
            Some(p.v_star.clone()),
            predicted_loss(loss_dagger, p, cfg.eta),
            predicted_sharpness(&st.tq, p, cfg.eta, None)?,
            v.sub(&p.v_star).norm(),
        ),
        None => (f64::NAN, f64::NAN, None, f64::NAN, f64::NAN, f64::NAN),
    };
    let (gen_x_star, gen_y_star, gen_pred_loss, gen_pred_sharp) = match (&st.generalized, profile) {
        (Some(g), Some(pr)) => (
            g.x_star,
            g.y_star,
            predicted_loss(loss_dagger, g, cfg.eta),
            // A failed profile read (x* outside the grid, overflowed fit)
            // only blanks this column; the stepping side records the
            // breakdown.
            predicted_sharpness(&st.tq, g, cfg.eta, Some(pr)).unwrap_or(f64::NAN),
        ),
        _ => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };

    Ok(TrajectoryRecord {
        t,
        theta: st.theta.clone(),
        theta_dagger: st.dagger.clone(),
        theta_flow: st.flow.clone(),
        loss,
        loss_dagger,
        loss_flow,
        sharpness_gd,
        lambda2: st.spec_dagger.lambda2,
        tq: st.tq.clone(),
        x,
        y,
        x_star,
        y_star,
        v_star,
        pred_loss,
        pred_sharp,
        gen_x_star,
        gen_y_star,
        gen_pred_loss,
        gen_pred_sharp,
        dev_norm: v.norm(),
        dev_pred,
        alpha_nonpositive: st.tq.alpha <= 0.0,
    })
}

struct AdvanceNote {
    predicted_failed: bool,
    generalized_failed: bool,
}

fn advance(
    oracle: &dyn LossOracle,
    cfg: &RunConfig,
    st: &mut StepState,
    profile: Option<&Profile1D>,
) -> Result<AdvanceNote> {
    let theta_next = gd_step(oracle, &st.theta, cfg.eta)?;
    let flow_next = match &st.flow {
        Some(f) => Some(flow_step(oracle, f, cfg.eta, cfg.flow_substeps)?),
        None => None,
    };
    let (dagger_next, spec_next) =
        constrained_step(oracle, &st.dagger, cfg, Some(&st.spec_dagger))?;
    let tq_next = taylor_at(oracle, &dagger_next, &spec_next, cfg.eta)?;
    let (_, u_gd_raw) = top_eigpair(oracle, &theta_next, &cfg.eig, Some(&st.u_gd))?;
    let u_gd = fix_sign(u_gd_raw, Some(&st.u_gd));

    let dagger_t = st.dagger.clone();
    let hvp = move |vv: &ParameterVector| oracle.hvp(&dagger_t, vv);

    let mut predicted_failed = false;
    if let Some(p) = &st.predicted {
        match predicted_step(&st.tq, &tq_next, p, cfg.eta, &hvp) {
            Ok(next) => st.predicted = Some(next),
            Err(_) => {
                st.predicted = None;
                predicted_failed = true;
            }
        }
    }
    let mut generalized_failed = false;
    if let (Some(g), Some(pr)) = (&st.generalized, profile) {
        match generalized_predicted_step(&st.tq, &tq_next, g, cfg.eta, &hvp, pr) {
            Ok(next) => st.generalized = Some(next),
            Err(_) => {
                st.generalized = None;
                generalized_failed = true;
            }
        }
    }

    st.theta = theta_next;
    st.flow = flow_next;
    st.dagger = dagger_next;
    st.spec_dagger = spec_next;
    st.tq = tq_next;
    st.u_gd = u_gd;
    Ok(AdvanceNote { predicted_failed, generalized_failed })
}

/// The never-unstable fallback: the phase-1 GD log dressed as records, with
/// theta_dagger = theta (identity projection on the stable side of M).
fn stable_run_result(
    oracle: &dyn LossOracle,
    cfg: &RunConfig,
    phase1: &[(ParameterVector, f64, f64, ParameterVector)],
) -> Result<RunResult> {
    let mut records = Vec::with_capacity(phase1.len());
    for (t, (theta, loss, s, u)) in phase1.iter().enumerate() {
        let lambda2 = second_eigenvalue(oracle, theta, &cfg.eig, (*s, u))?;
        let grad_s = oracle.third_contract(theta, u, u)?;
        let info = SpectralInfo {
            sharpness: *s,
            u: u.clone(),
            lambda2,
            grad_sharpness: grad_s,
        };
        let tq = taylor_at(oracle, theta, &info, cfg.eta)?;
        let alpha_nonpositive = tq.alpha <= 0.0;
        records.push(TrajectoryRecord {
            t,
            theta: theta.clone(),
            theta_dagger: theta.clone(),
            theta_flow: None,
            loss: *loss,
            loss_dagger: *loss,
            loss_flow: f64::NAN,
            sharpness_gd: *s,
            lambda2,
            tq,
            x: 0.0,
            y: 0.0,
            x_star: f64::NAN,
            y_star: f64::NAN,
            v_star: None,
            pred_loss: f64::NAN,
            pred_sharp: f64::NAN,
            gen_x_star: f64::NAN,
            gen_y_star: f64::NAN,
            gen_pred_loss: f64::NAN,
            gen_pred_sharp: f64::NAN,
            dev_norm: 0.0,
            dev_pred: f64::NAN,
            alpha_nonpositive,
        });
    }
    Ok(RunResult {
        records,
        detection_steps: phase1.len(),
        stop: StopReason::NeverUnstable,
        prediction_breakdown: None,
        generalized_breakdown: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{QuadraticLoss, ToyLoss, ToyModelParams};

    fn toy(eta: f64, alpha: f64, beta: f64) -> ToyLoss {
        ToyLoss::new(ToyModelParams::new(eta, alpha, beta).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn gd_step_quadratic() {
        let q = QuadraticLoss::from_spectrum(&[3.0]).unwrap();
        let th = ParameterVector::from_slice(&[1.0]).unwrap();
        let next = gd_step(&q, &th, 0.1).unwrap();
        assert!((next[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn gd_step_unstable_quadratic_diverges() {
        let eta = 0.1;
        let q = QuadraticLoss::from_spectrum(&[25.0]).unwrap(); // 25 > 2/eta = 20
        let th = ParameterVector::from_slice(&[0.5]).unwrap();
        let next = gd_step(&q, &th, eta).unwrap();
        assert!(next[0].abs() > th[0].abs());
    }

    #[test]
    fn gd_step_toy_reflection() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let th = ParameterVector::from_slice(&[0.3, 0.0, 0.0]).unwrap();
        let next = gd_step(&t, &th, eta).unwrap();
        assert!((next[0] + 0.3).abs() < 1e-14);
        // y picks up the self-stabilization source -eta sqrt(beta) x^2 / 2
        // plus the progressive-sharpening drift; only x reflects exactly.
        assert!((next[1] - eta * (1.0 - 0.5 * 0.3 * 0.3)).abs() < 1e-14);
    }

    #[test]
    fn flow_step_quadratic_exponential() {
        let c = 3.0;
        let eta = 0.1;
        let q = QuadraticLoss::from_spectrum(&[c]).unwrap();
        let th = ParameterVector::from_slice(&[1.0]).unwrap();
        let next = flow_step(&q, &th, eta, 4).unwrap();
        let h: f64 = eta / 4.0;
        let tol = 10.0 * h.powi(5) * 4.0;
        assert!((next[0] - (-c * eta).exp()).abs() < tol.max(1e-10));
    }

    #[test]
    fn flow_step_stationary_at_minimum() {
        let q = QuadraticLoss::from_spectrum(&[3.0, 1.0]).unwrap();
        let th = ParameterVector::zeros(2);
        let next = flow_step(&q, &th, 0.1, 4).unwrap();
        assert_eq!(next.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn flow_step_toy_z_descends_linearly() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let th = ParameterVector::zeros(3);
        let next = flow_step(&t, &th, eta, 4).unwrap();
        assert!((next[2] + eta).abs() < 1e-12);
    }

    #[test]
    fn projection_kills_x() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let cfg = RunConfig::new(eta, 10).unwrap();
        let th = ParameterVector::from_slice(&[0.05, 0.0, -0.3]).unwrap();
        let (proj, info) = project_to_manifold(&t, &th, &cfg, None).unwrap();
        assert!(proj[0].abs() < 1e-8);
        assert!(proj[1].abs() < 1e-8);
        assert!((proj[2] + 0.3).abs() < 1e-10);
        assert!((info.sharpness - 200.0).abs() < 1e-4 * 200.0);
    }

    #[test]
    fn projection_kills_positive_y() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let cfg = RunConfig::new(eta, 10).unwrap();
        let th = ParameterVector::from_slice(&[0.0, 0.2, 0.0]).unwrap();
        let (proj, _) = project_to_manifold(&t, &th, &cfg, None).unwrap();
        assert!(proj.norm() <= 1e-6);
    }

    #[test]
    fn projection_idempotent_on_manifold() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let cfg = RunConfig::new(eta, 10).unwrap();
        let th = ParameterVector::from_slice(&[0.0, 0.0, -1.0]).unwrap();
        let (proj, _) = project_to_manifold(&t, &th, &cfg, None).unwrap();
        assert!(proj.sub(&th).norm() < 1e-9);
    }

    #[test]
    fn constrained_step_toy_descends_z() {
        let eta = 0.01;
        let t = toy(eta, 1.0, 1.0);
        let cfg = RunConfig::new(eta, 10).unwrap();
        let (next, _) = constrained_step(&t, &ParameterVector::zeros(3), &cfg, None).unwrap();
        assert!(next[0].abs() < 1e-9);
        assert!(next[1].abs() < 1e-9);
        assert!((next[2] + eta).abs() < 1e-9);
    }

    #[test]
    fn run_detects_toy_instability_immediately() {
        let eta = 0.02;
        let t = toy(eta, 1.0, 1.0);
        let mut cfg = RunConfig::new(eta, 50).unwrap();
        cfg.track_generalized = false;
        let delta = 2.0f64.sqrt();
        let init = ParameterVector::from_slice(&[0.01 * delta, 0.0, 0.0]).unwrap();
        let run = run_experiment(&t, &init, &cfg).unwrap();
        assert_eq!(run.detection_steps, 0);
        assert_eq!(run.records.len(), 50);
        for rec in &run.records {
            let ti = rec.t as f64;
            assert!(rec.theta_dagger[0].abs() < 1e-8);
            assert!(rec.theta_dagger[1].abs() < 1e-8);
            assert!((rec.theta_dagger[2] + eta * ti).abs() < 1e-8);
            // manifold residuals
            assert!((rec.tq.sharpness - 2.0 / eta).abs() <= 1e-6 * 2.0 / eta);
        }
        // x*, y* track x, y closely at the start
        let r1 = &run.records[1];
        assert!((r1.x - r1.x_star).abs() < 1e-6);
    }

    #[test]
    fn run_stable_quadratic_never_triggers() {
        let eta = 0.1;
        let q = QuadraticLoss::from_spectrum(&[3.0, 1.0, 0.5]).unwrap();
        let mut cfg = RunConfig::new(eta, 10).unwrap();
        cfg.detect_max_steps = 20;
        let init = ParameterVector::from_slice(&[1.0, -0.5, 2.0]).unwrap();
        let run = run_experiment(&q, &init, &cfg).unwrap();
        assert!(matches!(run.stop, StopReason::NeverUnstable));
        assert_eq!(run.records.len(), 21);
        for w in run.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }
}
