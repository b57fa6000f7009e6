//! Config file parsing: `key = value` lines under one level of `[section]`
//! headers, `#` comments, no nesting. Sections: `[loss]`, `[run]`, `[ode]`,
//! `[output]`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use eos_core::{Activation, DatasetSpec, LossKind, LossSpec, QuarticSign, ToyModelParams};

/// One parsed section: insertion-ordered key -> value strings.
type Section = BTreeMap<String, String>;

/// Everything a single invocation may ask for: an optional trajectory run,
/// an optional ODE sweep, and where to put the outputs.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub loss: Option<LossSpec>,
    pub run: Option<RunSection>,
    pub ode: Option<OdeSection>,
    pub out_dir: PathBuf,
    /// Raw file text, echoed (and hashed) into summary.json.
    pub raw: String,
}

#[derive(Debug)]
pub struct RunSection {
    pub eta: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Initial point; defaults to the oracle's own initialization (MLP) and
    /// is required for losses without one.
    pub theta0: Option<Vec<f64>>,
    pub track_flow: bool,
    pub track_predicted: bool,
    pub track_generalized: bool,
    pub assumption_stride: usize,
    pub detect_max_steps: usize,
    pub stop_lambda2_frac: f64,
}

#[derive(Debug)]
pub struct OdeSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Initial X as a fraction of delta = sqrt(2 alpha / beta).
    pub x0_fracs: Vec<f64>,
    pub t_end: f64,
    pub h: f64,
}

/// Splits the file into sections; values keep everything after the first
/// `=` (trimmed), so commas inside values are fine.
fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(i) => &raw_line[..i],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                bail!("line {}: duplicate section [{name}]", lineno + 1);
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", lineno + 1))?;
        let section = current
            .as_ref()
            .ok_or_else(|| anyhow!("line {}: key outside any [section]", lineno + 1))?;
        let entry = sections.get_mut(section).unwrap();
        let key = key.trim().to_string();
        if entry.contains_key(&key) {
            bail!("line {}: duplicate key `{key}` in [{section}]", lineno + 1);
        }
        entry.insert(key, value.trim().to_string());
    }
    Ok(sections)
}

/// Typed accessor that consumes keys, so leftovers can be reported as
/// unknown at the end.
struct Keys {
    name: String,
    map: Section,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| anyhow!("[{}] is missing required key `{key}`", self.name))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.require(key)?;
        v.parse()
            .map_err(|e| anyhow!("[{}] {key} = {v}: {e}", self.name))
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(v) => v.parse().map_err(|e| anyhow!("[{}] {key} = {v}: {e}", self.name)),
            None => Ok(default),
        }
    }

    fn list_f64(&mut self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        parse_list(&self.name, key, &v)
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            bail!("[{}] has unknown key `{key}`", self.name);
        }
        Ok(())
    }
}

fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| anyhow!("[{section}] {key}: bad entry `{}`: {e}", s.trim()))
        })
        .collect()
}

fn parse_loss(mut keys: Keys) -> Result<LossSpec> {
    let kind = keys.require("kind")?;
    let spec = match kind.as_str() {
        "toy" | "quartic_toy" => {
            let params = ToyModelParams::new(
                keys.parse("eta")?,
                keys.parse("alpha")?,
                keys.parse("beta")?,
            )?;
            if kind == "toy" {
                LossSpec::Toy(params)
            } else {
                let sign = match keys.require("sign")?.as_str() {
                    "subquadratic" => QuarticSign::Subquadratic,
                    "superquadratic" => QuarticSign::Superquadratic,
                    other => bail!("[loss] sign must be subquadratic or superquadratic, got `{other}`"),
                };
                LossSpec::QuarticToy {
                    params,
                    rho4: keys.parse("rho4")?,
                    sign,
                }
            }
        }
        "quadratic_spectrum" => LossSpec::QuadraticSpectrum {
            spectrum: keys.list_f64("spectrum")?,
        },
        "mlp" => {
            let widths: Vec<usize> = keys
                .require("widths")?
                .split(',')
                .map(|s| s.trim().parse().context("[loss] widths"))
                .collect::<Result<_>>()?;
            let activation = match keys.require("activation")?.as_str() {
                "swish" => Activation::Swish,
                "tanh" => Activation::Tanh,
                other => bail!("[loss] activation must be swish or tanh, got `{other}`"),
            };
            let loss = match keys.require("loss")?.as_str() {
                "mse" => LossKind::Mse,
                "logistic" => LossKind::Logistic,
                other => bail!("[loss] loss must be mse or logistic, got `{other}`"),
            };
            let dataset = match keys.require("dataset")?.as_str() {
                "synthetic" => DatasetSpec::Synthetic {
                    n: keys.parse("n")?,
                    seed: keys.parse("data_seed")?,
                },
                "csv" => DatasetSpec::Csv {
                    path: keys.require("csv_path")?,
                },
                other => bail!("[loss] dataset must be synthetic or csv, got `{other}`"),
            };
            LossSpec::Mlp {
                widths,
                activation,
                loss,
                dataset,
                init_seed: keys.parse("init_seed")?,
            }
        }
        other => bail!("[loss] unknown kind `{other}`"),
    };
    keys.finish()?;
    Ok(spec)
}

fn parse_run(mut keys: Keys) -> Result<RunSection> {
    let run = RunSection {
        eta: keys.parse("eta")?,
        max_steps: keys.parse("max_steps")?,
        seed: keys.parse_or("seed", 0u64)?,
        theta0: match keys.take("theta0") {
            Some(v) => Some(parse_list("run", "theta0", &v)?),
            None => None,
        },
        track_flow: keys.parse_or("track_flow", true)?,
        track_predicted: keys.parse_or("track_predicted", true)?,
        track_generalized: keys.parse_or("track_generalized", false)?,
        assumption_stride: keys.parse_or("assumption_stride", 10usize)?,
        detect_max_steps: keys.parse_or("detect_max_steps", 10_000usize)?,
        stop_lambda2_frac: keys.parse_or("stop_lambda2_frac", 1.9f64)?,
    };
    keys.finish()?;
    if !(run.eta > 0.0) {
        bail!("[run] eta must be positive");
    }
    Ok(run)
}

fn parse_ode(mut keys: Keys) -> Result<OdeSection> {
    let ode = OdeSection {
        alphas: keys.list_f64("alphas")?,
        betas: keys.list_f64("betas")?,
        x0_fracs: keys.list_f64("x0_fracs")?,
        t_end: keys.parse_or("t_end", 40.0f64)?,
        h: keys.parse_or("h", 1e-3f64)?,
    };
    keys.finish()?;
    if !(ode.h > 0.0 && ode.t_end > 0.0) {
        bail!("[ode] t_end and h must be positive");
    }
    if ode.alphas.is_empty() || ode.betas.is_empty() || ode.x0_fracs.is_empty() {
        bail!("[ode] alphas, betas, and x0_fracs must be non-empty");
    }
    Ok(ode)
}

impl ExperimentConfig {
    pub fn from_str(text: &str, default_out: PathBuf) -> Result<Self> {
        let mut sections = parse_sections(text)?;
        let mut take = |name: &str| {
            sections.remove(name).map(|map| Keys {
                name: name.to_string(),
                map,
            })
        };

        let loss = take("loss").map(parse_loss).transpose()?;
        let mut run = take("run").map(parse_run).transpose()?;
        let ode = take("ode").map(parse_ode).transpose()?;
        let out_dir = match take("output") {
            Some(mut keys) => {
                let dir = keys.parse_or("dir", default_out.to_string_lossy().into_owned())?;
                keys.finish()?;
                PathBuf::from(dir)
            }
            None => default_out,
        };
        if let Some(name) = sections.keys().next() {
            bail!("unknown section [{name}]");
        }

        if run.is_none() && ode.is_none() {
            bail!("config requests nothing: need a [run] or an [ode] section");
        }
        if run.is_some() && loss.is_none() {
            bail!("a [run] section requires a [loss] section");
        }

        // Environment override for the seed.
        if let (Some(run), Ok(seed)) = (run.as_mut(), std::env::var("EOS_LAB_SEED")) {
            run.seed = seed
                .parse()
                .map_err(|e| anyhow!("EOS_LAB_SEED = {seed}: {e}"))?;
        }

        Ok(Self {
            loss,
            run,
            ode,
            out_dir,
            raw: text.to_string(),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        let default_out = path
            .parent()
            .unwrap_or_else(|| std::path::Path::new("."))
            .join(format!("{stem}_out"));
        Self::from_str(&text, default_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
[loss]
kind = toy
eta = 0.02
alpha = 1.0
beta = 1.0

[run]
eta = 0.02            # must match the eta baked into the toy loss
max_steps = 100
theta0 = 0.014, 0, 0
";

    #[test]
    fn parses_toy_config() {
        let cfg = ExperimentConfig::from_str(TOY, PathBuf::from("out")).unwrap();
        let run = cfg.run.unwrap();
        assert_eq!(run.max_steps, 100);
        assert_eq!(run.theta0.as_deref(), Some(&[0.014, 0.0, 0.0][..]));
        assert!(matches!(cfg.loss, Some(LossSpec::Toy(_))));
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_key() {
        let text = format!("{TOY}typo = 1\n");
        let err = ExperimentConfig::from_str(&text, PathBuf::from("out")).unwrap_err();
        assert!(err.to_string().contains("unknown key `typo`"), "{err}");
    }

    #[test]
    fn rejects_empty_request() {
        let err = ExperimentConfig::from_str("[loss]\nkind = toy\neta = 1\nalpha = 1\nbeta = 1\n", PathBuf::from("out"))
            .unwrap_err();
        assert!(err.to_string().contains("requests nothing"), "{err}");
    }

    #[test]
    fn ode_only_config() {
        let text = "[ode]\nalphas = 0.5, 1\nbetas = 1\nx0_fracs = 0.1, 0.9\n";
        let cfg = ExperimentConfig::from_str(text, PathBuf::from("out")).unwrap();
        let ode = cfg.ode.unwrap();
        assert_eq!(ode.alphas, vec![0.5, 1.0]);
        assert_eq!(ode.h, 1e-3);
        assert!(cfg.run.is_none());
    }
}
