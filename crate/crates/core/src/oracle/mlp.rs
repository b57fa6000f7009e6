//! Fully-connected network with a single output unit, trained full-batch.
//! Gradient by reverse accumulation; Hessian-vector products by
//! forward-over-reverse tangent propagation (exact, no finite differences).
//! Third-order contractions fall through to the finite-difference default.

use super::{check_dim, finite_value, Capabilities, LossOracle};
use crate::error::{EosError, Result};
use crate::vector::ParameterVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Tanh,
}

impl Activation {
    fn eval(&self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Swish => {
                let s = sigmoid(z);
                let sp = s * (1.0 - s);
                let spp = sp * (1.0 - 2.0 * s);
                // f = z*s, f' = s + z s', f'' = 2 s' + z s''
                (z * s, s + z * sp, 2.0 * sp + z * spp)
            }
            Activation::Tanh => {
                let t = z.tanh();
                let tp = 1.0 - t * t;
                (t, tp, -2.0 * t * tp)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    /// Binary cross-entropy on a single logit; labels in {0, 1}.
    Logistic,
}

impl LossKind {
    /// Per-sample loss, first and second derivative with respect to the logit.
    fn eval(&self, f: f64, y: f64) -> (f64, f64, f64) {
        match self {
            LossKind::Mse => {
                let r = f - y;
                (0.5 * r * r, r, 1.0)
            }
            LossKind::Logistic => {
                // softplus(f) - y f, numerically stable for large |f|
                let sp = if f > 0.0 {
                    f + (-f).exp().ln_1p()
                } else {
                    f.exp().ln_1p()
                };
                let s = sigmoid(f);
                (sp - y * f, s - y, s * (1.0 - s))
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Training set: inputs plus scalar targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    /// Regression targets y = sin(2 pi x1) + 0.5 x2 on Gaussian inputs;
    /// binary labels by the sign of the same function.
    pub fn synthetic(n: usize, input_dim: usize, seed: u64, classify: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..input_dim).map(|_| standard_normal(&mut rng)).collect();
            let x2 = if input_dim > 1 { x[1] } else { 0.0 };
            let y = (2.0 * std::f64::consts::PI * x[0]).sin() + 0.5 * x2;
            targets.push(if classify {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                y
            });
            inputs.push(x);
        }
        Self { inputs, targets }
    }

    /// CSV with a header row, feature columns `x0..xk` and target column `y`.
    pub fn from_csv(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EosError::Config(format!("cannot read dataset {path}: {e}")))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| EosError::Config(format!("dataset {path} is empty")))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let y_col = cols
            .iter()
            .position(|c| *c == "y")
            .ok_or_else(|| EosError::Config(format!("dataset {path} has no `y` column")))?;
        let mut feature_cols = Vec::new();
        for k in 0.. {
            match cols.iter().position(|c| *c == format!("x{k}")) {
                Some(i) => feature_cols.push(i),
                None => break,
            }
        }
        if feature_cols.is_empty() {
            return Err(EosError::Config(format!(
                "dataset {path} has no `x0..xk` feature columns"
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(EosError::Config(format!(
                    "dataset {path} row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            let parse = |i: usize| -> Result<f64> {
                fields[i].parse::<f64>().map_err(|e| {
                    EosError::Config(format!("dataset {path} row {}: {e}", lineno + 2))
                })
            };
            inputs.push(
                feature_cols
                    .iter()
                    .map(|&i| parse(i))
                    .collect::<Result<Vec<f64>>>()?,
            );
            targets.push(parse(y_col)?);
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MlpLoss {
    widths: Vec<usize>,
    activation: Activation,
    loss: LossKind,
    data: Dataset,
    dim: usize,
    init: Vec<f64>,
}

/// Per-layer (weight offset, bias offset) into the packed parameter vector.
/// Weights are row-major [out][in], followed by the biases.
fn layer_offsets(widths: &[usize]) -> Vec<(usize, usize)> {
    let mut offsets = Vec::new();
    let mut o = 0;
    for l in 0..widths.len() - 1 {
        let w = o;
        o += widths[l + 1] * widths[l];
        offsets.push((w, o));
        o += widths[l + 1];
    }
    offsets
}

impl MlpLoss {
    pub fn new(
        widths: &[usize],
        activation: Activation,
        loss: LossKind,
        data: Dataset,
        init_seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(EosError::Config(
                "mlp needs at least an input and an output layer".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(EosError::Config("mlp layer widths must be positive".into()));
        }
        if *widths.last().unwrap() != 1 {
            return Err(EosError::Config("mlp output width must be 1".into()));
        }
        if data.is_empty() {
            return Err(EosError::Config("mlp dataset is empty".into()));
        }
        if data.inputs.iter().any(|x| x.len() != widths[0]) {
            return Err(EosError::Config(format!(
                "mlp input width {} does not match dataset feature count",
                widths[0]
            )));
        }
        if matches!(loss, LossKind::Logistic)
            && data.targets.iter().any(|&y| y != 0.0 && y != 1.0)
        {
            return Err(EosError::Config(
                "logistic loss requires labels in {0, 1}".into(),
            ));
        }
        let dim: usize = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();

        // Fan-in-scaled Gaussian init, biases zero.
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut init = vec![0.0; dim];
        for (l, (w_off, b_off)) in layer_offsets(widths).into_iter().enumerate() {
            let fan_in = widths[l] as f64;
            let scale = 1.0 / fan_in.sqrt();
            for v in &mut init[w_off..b_off] {
                *v = scale * standard_normal(&mut rng);
            }
        }

        Ok(Self {
            widths: widths.to_vec(),
            activation,
            loss,
            data,
            dim,
            init,
        })
    }

    /// Deterministic initialization drawn from the seed given at construction.
    pub fn init_params(&self) -> ParameterVector {
        ParameterVector::new(self.init.clone()).expect("init is finite")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Forward pass for one sample; returns pre-activations and activations
    /// per layer (activations[0] is the input).
    fn forward(&self, theta: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let offsets = layer_offsets(&self.widths);
        let mut zs = Vec::with_capacity(self.n_layers());
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (w_off, b_off) = offsets[l];
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let a_prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                let row = &theta[w_off + i * n_in..w_off + (i + 1) * n_in];
                z[i] = theta[b_off + i]
                    + row.iter().zip(a_prev).map(|(w, a)| w * a).sum::<f64>();
            }
            let a = if l + 1 < self.n_layers() {
                z.iter().map(|&zi| self.activation.eval(zi).0).collect()
            } else {
                z.clone()
            };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }
}

impl LossOracle for MlpLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            analytic_grad: true,
            analytic_hvp: true,
            analytic_third: false,
            batched: true,
        }
    }

    fn value(&self, theta: &ParameterVector) -> Result<f64> {
        check_dim(self, theta)?;
        let n = self.data.len() as f64;
        let mut total = 0.0;
        for (x, &y) in self.data.inputs.iter().zip(&self.data.targets) {
            let (_, acts) = self.forward(theta.as_slice(), x);
            let f = acts.last().unwrap()[0];
            total += self.loss.eval(f, y).0;
        }
        finite_value(total / n, "mlp value")
    }

    fn gradient(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        let offsets = layer_offsets(&self.widths);
        let th = theta.as_slice();
        let n = self.data.len() as f64;
        let mut grad = vec![0.0; self.dim];
        for (x, &y) in self.data.inputs.iter().zip(&self.data.targets) {
            let (zs, acts) = self.forward(th, x);
            let f = acts.last().unwrap()[0];
            let (_, df, _) = self.loss.eval(f, y);
            let mut delta = vec![df / n];
            for l in (0..self.n_layers()).rev() {
                let (w_off, b_off) = offsets[l];
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let a_prev = &acts[l];
                for i in 0..n_out {
                    for j in 0..n_in {
                        grad[w_off + i * n_in + j] += delta[i] * a_prev[j];
                    }
                    grad[b_off + i] += delta[i];
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    for j in 0..n_in {
                        let mut s = 0.0;
                        for i in 0..n_out {
                            s += th[w_off + i * n_in + j] * delta[i];
                        }
                        prev[j] = s * self.activation.eval(zs[l - 1][j]).1;
                    }
                    delta = prev;
                }
            }
        }
        ParameterVector::new(grad)
    }

    fn hvp(&self, theta: &ParameterVector, v: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        check_dim(self, v)?;
        let offsets = layer_offsets(&self.widths);
        let th = theta.as_slice();
        let tv = v.as_slice();
        let n = self.data.len() as f64;
        let mut hv = vec![0.0; self.dim];
        for (x, &y) in self.data.inputs.iter().zip(&self.data.targets) {
            let (zs, _) = self.forward(th, x);

            // Forward pass with tangents along v.
            let n_layers = self.n_layers();
            let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
            let mut dacts: Vec<Vec<f64>> = vec![vec![0.0; x.len()]];
            let mut dzs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let (w_off, b_off) = offsets[l];
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let a_prev = &acts[l];
                let da_prev = &dacts[l];
                let mut a = vec![0.0; n_out];
                let mut da = vec![0.0; n_out];
                let mut dz = vec![0.0; n_out];
                for i in 0..n_out {
                    let row = &th[w_off + i * n_in..w_off + (i + 1) * n_in];
                    let drow = &tv[w_off + i * n_in..w_off + (i + 1) * n_in];
                    let mut d = tv[b_off + i];
                    for j in 0..n_in {
                        d += drow[j] * a_prev[j] + row[j] * da_prev[j];
                    }
                    dz[i] = d;
                    if l + 1 < n_layers {
                        let (fz, fpz, _) = self.activation.eval(zs[l][i]);
                        a[i] = fz;
                        da[i] = fpz * d;
                    } else {
                        a[i] = zs[l][i];
                        da[i] = d;
                    }
                }
                dzs.push(dz);
                acts.push(a);
                dacts.push(da);
            }

            let f = acts.last().unwrap()[0];
            let df = dacts.last().unwrap()[0];
            let (_, lf, lff) = self.loss.eval(f, y);
            let mut delta = vec![lf / n];
            let mut ddelta = vec![lff * df / n];
            for l in (0..n_layers).rev() {
                let (w_off, b_off) = offsets[l];
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let a_prev = &acts[l];
                let da_prev = &dacts[l];
                for i in 0..n_out {
                    for j in 0..n_in {
                        hv[w_off + i * n_in + j] +=
                            ddelta[i] * a_prev[j] + delta[i] * da_prev[j];
                    }
                    hv[b_off + i] += ddelta[i];
                }
                if l > 0 {
                    let mut prev = vec![0.0; n_in];
                    let mut dprev = vec![0.0; n_in];
                    for j in 0..n_in {
                        let mut s = 0.0;
                        let mut ds = 0.0;
                        for i in 0..n_out {
                            let w = th[w_off + i * n_in + j];
                            let dw = tv[w_off + i * n_in + j];
                            s += w * delta[i];
                            ds += dw * delta[i] + w * ddelta[i];
                        }
                        let (_, fp, fpp) = self.activation.eval(zs[l - 1][j]);
                        prev[j] = s * fp;
                        dprev[j] = ds * fp + s * fpp * dzs[l - 1][j];
                    }
                    delta = prev;
                    ddelta = dprev;
                }
            }
        }
        ParameterVector::new(hv)
    }

    fn as_dyn(&self) -> &dyn LossOracle {
        self
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; consumes two uniforms per call for determinism across
    // platforms (no rejection loop).
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
