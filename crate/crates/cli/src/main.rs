//! eos-lab: declarative experiment runner for edge-of-stability trajectory
//! studies. Subcommands: `run <config>`, `sweep <dir> --jobs N`, `check`.
//!
//! Exit codes: 0 success, 2 config error, 3 run aborted (partial outputs
//! are retained).

mod check;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand};
use eos_core::diagnostics::{assumption_report, coupling_summary};
use eos_core::{
    make_builtin_loss, LossOracle, LossSpec, MlpLoss, ParameterVector, RunConfig, StopReason,
};

use config::ExperimentConfig;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "eos-lab", version, about = "Edge-of-stability experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its outputs.
    Run { config: PathBuf },
    /// Run every *.cfg in a directory.
    Sweep {
        dir: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in invariant suite and print pass/fail.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_config(&config),
        Command::Sweep { dir, jobs } => sweep(&dir, jobs),
        Command::Check => {
            if check::run_checks() {
                EXIT_OK
            } else {
                EXIT_ABORTED
            }
        }
    };
    ExitCode::from(code)
}

/// Builds the oracle plus the starting point: explicit `theta0` wins; an
/// MLP can fall back to its own seeded initialization.
fn build_oracle(
    spec: &LossSpec,
    theta0: &Option<Vec<f64>>,
) -> anyhow::Result<(Box<dyn LossOracle>, ParameterVector)> {
    let oracle = make_builtin_loss(spec)?;
    let init = match theta0 {
        Some(coords) => {
            let v = ParameterVector::from_slice(coords)?;
            if v.dim() != oracle.dim() {
                anyhow::bail!(
                    "[run] theta0 has {} coordinates, the loss has {}",
                    v.dim(),
                    oracle.dim()
                );
            }
            v
        }
        None => match spec {
            LossSpec::Mlp {
                widths,
                activation,
                loss,
                dataset,
                init_seed,
            } => {
                let data = match dataset {
                    eos_core::DatasetSpec::Synthetic { n, seed } => {
                        eos_core::Dataset::synthetic(
                            *n,
                            widths[0],
                            *seed,
                            matches!(loss, eos_core::LossKind::Logistic),
                        )
                    }
                    eos_core::DatasetSpec::Csv { path } => eos_core::Dataset::from_csv(path)?,
                };
                MlpLoss::new(widths, *activation, *loss, data, *init_seed)?.init_params()
            }
            _ => anyhow::bail!("[run] theta0 is required for this loss family"),
        },
    };
    Ok((oracle, init))
}

fn run_config(path: &Path) -> u8 {
    let cfg = match ExperimentConfig::from_file(path) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("eos-lab: config error: {err:#}");
            return EXIT_CONFIG;
        }
    };
    if let Err(err) = std::fs::create_dir_all(&cfg.out_dir) {
        eprintln!("eos-lab: cannot create {}: {err}", cfg.out_dir.display());
        return EXIT_ABORTED;
    }

    let mut code = EXIT_OK;

    if let Some(ode) = &cfg.ode {
        if let Err(err) = output::write_ode_csv(&cfg.out_dir.join("ode.csv"), ode) {
            eprintln!("eos-lab: ode sweep failed: {err:#}");
            code = code.max(EXIT_ABORTED);
        }
    }

    if let Some(run) = &cfg.run {
        let loss_spec = cfg.loss.as_ref().expect("validated: run implies loss");
        let (oracle, theta0) = match build_oracle(loss_spec, &run.theta0) {
            Ok(pair) => pair,
            Err(err) => {
                eprintln!("eos-lab: config error: {err:#}");
                return code.max(EXIT_CONFIG);
            }
        };
        let mut rc = match RunConfig::new(run.eta, run.max_steps) {
            Ok(rc) => rc,
            Err(err) => {
                eprintln!("eos-lab: config error: {err}");
                return code.max(EXIT_CONFIG);
            }
        };
        rc.track_flow = run.track_flow;
        rc.track_predicted = run.track_predicted;
        rc.track_generalized = run.track_generalized;
        rc.detect_max_steps = run.detect_max_steps;
        rc.stop_lambda2_frac = run.stop_lambda2_frac;
        rc.eig.seed = run.seed;
        if let Err(err) = rc.validate() {
            eprintln!("eos-lab: config error: {err}");
            return code.max(EXIT_CONFIG);
        }

        let result = match eos_core::trajectory::run_experiment(oracle.as_ref(), &theta0, &rc) {
            Ok(result) => result,
            Err(err) => {
                eprintln!("eos-lab: run failed before producing a log: {err}");
                return code.max(EXIT_ABORTED);
            }
        };

        let coupling = coupling_summary(&result.records, run.eta, result.prediction_breakdown);
        let write = || -> anyhow::Result<()> {
            output::write_run_csv(&cfg.out_dir.join("run.csv"), &result)?;
            let report = assumption_report(
                &result.records,
                oracle.as_ref(),
                &rc,
                run.assumption_stride,
            )?;
            output::write_assumptions_csv(&cfg.out_dir.join("assumptions.csv"), &report)?;
            output::write_summary_json(
                &cfg.out_dir.join("summary.json"),
                &result,
                &coupling,
                run.seed,
                &cfg.raw,
            )?;
            Ok(())
        };
        if let Err(err) = write() {
            eprintln!("eos-lab: writing outputs failed: {err:#}");
            code = code.max(EXIT_ABORTED);
        }
        if let StopReason::Aborted { step, message } = &result.stop {
            eprintln!("eos-lab: run aborted at step {step}: {message} (partial outputs kept)");
            code = code.max(EXIT_ABORTED);
        }
    }

    code
}

fn sweep(dir: &Path, jobs: usize) -> u8 {
    let mut configs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "cfg"))
            .collect(),
        Err(err) => {
            eprintln!("eos-lab: cannot read {}: {err}", dir.display());
            return EXIT_CONFIG;
        }
    };
    configs.sort();
    if configs.is_empty() {
        eprintln!("eos-lab: no *.cfg files in {}", dir.display());
        return EXIT_CONFIG;
    }

    let jobs = jobs.max(1).min(configs.len());
    let next = AtomicUsize::new(0);
    let worst = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = configs.get(i) else { break };
                let code = run_config(path);
                println!("sweep: {} -> exit {code}", path.display());
                worst.fetch_max(code as usize, Ordering::Relaxed);
            });
        }
    });
    worst.load(Ordering::Relaxed) as u8
}
