//! Output files: `run.csv`, `assumptions.csv`, `summary.json`, `ode.csv`.
//! Every file starts with a `# columns:` schema comment; floats are written
//! with Rust's shortest round-trip formatting so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use eos_core::diagnostics::{AssumptionReport, CouplingSummary};
use eos_core::{RunResult, StopReason, TrajectoryRecord};
use sha2::{Digest, Sha256};

use crate::config::OdeSection;

/// Stage tags of the four-stage instability cycle. Magnitude and trend of
/// the oscillating coordinate are read off the two-step envelope
/// max(|x_t|, |x_{t-1}|), since raw |x_t| alternates every step inside the
/// cycle and has no usable per-step trend.
pub fn label_phases(records: &[TrajectoryRecord]) -> Vec<u8> {
    let env: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let prev = if i > 0 { records[i - 1].x.abs() } else { 0.0 };
            r.x.abs().max(prev)
        })
        .collect();
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (y_rising, y_falling, env_rising, env_falling) = if i == 0 {
                (false, false, false, false)
            } else {
                let py = records[i - 1].y;
                (r.y > py, r.y < py, env[i] > env[i - 1], env[i] < env[i - 1])
            };
            let delta = r.tq.delta;
            if env[i] < delta / 2.0 && y_rising {
                1
            } else if r.y > 0.0 && env_rising {
                2
            } else if env[i] > delta && y_falling {
                3
            } else if r.y < 0.0 && env_falling {
                4
            } else {
                // No stage matches (stable runs, exact fixed point): the
                // tie-break convention tags stage 1.
                1
            }
        })
        .collect()
}

/// Shortest round-trip float formatting; NaN marks scalars from disabled
/// or broken-down trackers.
fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v != 0.0 && !(1e-4..1e16).contains(&v.abs()) {
        // `{}` expands extreme magnitudes to full decimals; `{:e}` keeps
        // them compact while still round-tripping.
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn write_run_csv(path: &Path, result: &RunResult) -> Result<()> {
    let phases = label_phases(&result.records);
    let mut out = String::new();
    out.push_str(
        "# columns: t,loss,loss_dagger,loss_flow,sharpness,sharpness_2avg,lambda2,x,y,\
         x_star,y_star,pred_loss,pred_sharp,gen_pred_loss,gen_pred_sharp,dev_norm,dev_pred,\
         delta_t,eps_t,phase\n",
    );
    for (i, r) in result.records.iter().enumerate() {
        let two_avg = if i > 0 {
            0.5 * (r.sharpness_gd + result.records[i - 1].sharpness_gd)
        } else {
            r.sharpness_gd
        };
        let cols = [
            fmt(r.loss),
            fmt(r.loss_dagger),
            fmt(r.loss_flow),
            fmt(r.sharpness_gd),
            fmt(two_avg),
            fmt(r.lambda2),
            fmt(r.x),
            fmt(r.y),
            fmt(r.x_star),
            fmt(r.y_star),
            fmt(r.pred_loss),
            fmt(r.pred_sharp),
            fmt(r.gen_pred_loss),
            fmt(r.gen_pred_sharp),
            fmt(r.dev_norm),
            fmt(r.dev_pred),
            fmt(r.tq.delta),
            fmt(r.tq.eps),
        ];
        writeln!(out, "{},{},{}", r.t, cols.join(","), phases[i]).unwrap();
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_assumptions_csv(path: &Path, report: &AssumptionReport) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "# columns: t,alpha_t,eps_t,cosine_t,norm_s_perp,rho3_hat,rho4_hat,ratio_third,\
         ratio_hess,ratio_minres,lambda2_eta\n",
    );
    writeln!(out, "# estimate stride: {}", report.stride).unwrap();
    for r in &report.rows {
        let cols = [
            fmt(r.alpha_t),
            fmt(r.eps_t),
            fmt(r.cosine_t),
            fmt(r.norm_s_perp),
            fmt(r.rho3_hat),
            fmt(r.rho4_hat),
            fmt(r.ratio_third),
            fmt(r.ratio_hess),
            fmt(r.ratio_minres),
            fmt(r.lambda2_eta),
        ];
        writeln!(out, "{},{}", r.t, cols.join(",")).unwrap();
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn stop_reason_str(stop: &StopReason) -> String {
    match stop {
        StopReason::MaxSteps => "max_steps".to_string(),
        StopReason::Lambda2Threshold { step, lambda2 } => {
            format!("lambda2_threshold at step {step} (lambda2 = {lambda2})")
        }
        StopReason::NeverUnstable => "never_unstable".to_string(),
        StopReason::Aborted { step, message } => format!("aborted at step {step}: {message}"),
    }
}

pub fn write_summary_json(
    path: &Path,
    result: &RunResult,
    coupling: &CouplingSummary,
    seed: u64,
    config_text: &str,
) -> Result<()> {
    let hash = hex_digest(config_text);
    let summary = serde_json::json!({
        "seed": seed,
        "config_sha256": hash,
        "detection_steps": result.detection_steps,
        "records": result.records.len(),
        "stop": stop_reason_str(&result.stop),
        "prediction_breakdown": result.prediction_breakdown,
        "generalized_breakdown": result.generalized_breakdown,
        "coupling": coupling,
        "config": config_text,
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Integrates every (alpha, beta, x0_frac) grid cell and emits the phase
/// portraits in one file, one row per sample.
pub fn write_ode_csv(path: &Path, ode: &OdeSection) -> Result<()> {
    let mut out = String::new();
    out.push_str("# columns: alpha,beta,x0,t,X,Y,g\n");
    for &alpha in &ode.alphas {
        for &beta in &ode.betas {
            for &frac in &ode.x0_fracs {
                let x0 = frac * eos_core::ode::delta(alpha, beta);
                let state0 = eos_core::ode::OdeState { x: x0, y: 0.0 };
                let samples = eos_core::ode::integrate(state0, alpha, beta, ode.t_end, ode.h)?;
                for s in samples {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        fmt(alpha),
                        fmt(beta),
                        fmt(x0),
                        fmt(s.t),
                        fmt(s.state.x),
                        fmt(s.state.y),
                        fmt(s.potential)
                    )
                    .unwrap();
                }
            }
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
