//! Coordinate MLP occupancy field with hand-written reverse mode.
//!
//! Parameters live in one flat vector: for every layer the weight matrix
//! (`out x in`, row-major) followed by its bias. The gradient buffer mirrors it.

mod adam;
mod checkpoint;
mod train;

use matrixmultiply::dgemm;
use rand::Rng;

use crate::geometry::Point3;
use crate::loss::{reconstruction_loss_grad, reconstruction_loss_with, LogitPair, LossBreakdown, LossConfig};
use crate::needles::NeedleSample;
use crate::rng::{SeedSplitter, Stream};
use crate::{Error, Result};

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    fit_shape, write_loss_csv, LossCsvWriter, LossRecord, Regime, SigmaEvent, SigmaSchedule, TrainConfig,
    TrainOutcome, Trainer,
};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `softplus(beta * z) / beta`.
    Softplus { beta: f64 },
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Softplus { beta: 100.0 }
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus { beta } => crate::loss::softplus(beta * z) / beta,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative from the pre-activation `z` and activation `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Softplus { beta } => crate::loss::sigmoid(beta * z),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Initialization of the final (logit) layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputInit {
    /// Zero weights and bias: the logit is 0 everywhere.
    Zero,
    /// Weights uniform in `±scale / sqrt(fan_in)`, zero bias.
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_init: OutputInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128; 4],
            activation: Activation::default(),
            output_init: OutputInit::Uniform(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyModel {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    grads: Vec<f64>,
}

/// Activations recorded by [`OccupancyModel::forward_tape`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    n: usize,
    /// `inputs[0]` is the query matrix; `inputs[l]` the activations entering layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ForwardTape {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// `c (m x n) = a (m x k) * b^T`, with `b` stored `n x k` row-major.
fn matmul_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl OccupancyModel {
    /// Hidden layers use uniform `±1/sqrt(fan_in)` weights and biases.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut widths = vec![3];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(1);
        let count = param_count(&widths);
        let mut params = Vec::with_capacity(count);
        let mut rng = SeedSplitter::new(seed).rng(Stream::Init, 0);
        let last = widths.len() - 2;
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            if l < last {
                for _ in 0..fan_in * fan_out + fan_out {
                    params.push(rng.gen_range(-bound..=bound));
                }
            } else {
                match cfg.output_init {
                    OutputInit::Zero => params.extend(std::iter::repeat(0.0).take(fan_in * fan_out)),
                    OutputInit::Uniform(s) => {
                        for _ in 0..fan_in * fan_out {
                            params.push(s * rng.gen_range(-bound..=bound));
                        }
                    }
                }
                params.extend(std::iter::repeat(0.0).take(fan_out));
            }
        }
        Self {
            grads: vec![0.0; params.len()],
            widths,
            activation: cfg.activation,
            params,
        }
    }

    /// Rebuilds a model from raw parts, as stored in a checkpoint.
    pub fn from_parts(widths: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 3 || *widths.last().unwrap() != 1 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let expected = param_count(&widths);
        if params.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for widths {widths:?} (expected {expected})",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            grads: vec![0.0; params.len()],
            widths,
            activation,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Offsets of each layer's weights and bias in the flat vector.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.widths.len() - 1);
        let mut off = 0;
        for w in self.widths.windows(2) {
            let wsize = w[0] * w[1];
            out.push((off, off + wsize));
            off += wsize + w[1];
        }
        out
    }

    /// Negates the final layer, which negates every logit.
    pub fn negate_output(&mut self) {
        let (w_off, _) = *self.layer_offsets().last().unwrap();
        for p in &mut self.params[w_off..] {
            *p = -*p;
        }
    }

    pub fn forward_logits(&self, pts: &[Point3]) -> Vec<f64> {
        self.forward_tape(pts).logits
    }

    /// Forward pass that keeps the intermediates needed by [`Self::backward`].
    pub fn forward_tape(&self, pts: &[Point3]) -> ForwardTape {
        let n = pts.len();
        let mut inputs = Vec::with_capacity(self.widths.len() - 1);
        let mut pre = Vec::with_capacity(self.widths.len() - 2);
        inputs.push(pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect::<Vec<f64>>());
        let offsets = self.layer_offsets();
        let layers = offsets.len();
        let mut logits = Vec::new();
        for (l, &(w_off, b_off)) in offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let mut z = vec![0.0; n * fan_out];
            if n > 0 {
                matmul_bt(
                    n,
                    fan_in,
                    fan_out,
                    inputs.last().unwrap(),
                    &self.params[w_off..b_off],
                    &mut z,
                );
            }
            let bias = &self.params[b_off..b_off + fan_out];
            for row in z.chunks_exact_mut(fan_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if l + 1 == layers {
                logits = z;
            } else {
                let a: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(z);
                inputs.push(a);
            }
        }
        ForwardTape {
            n,
            inputs,
            pre,
            logits,
        }
    }

    /// Overwrites the gradient buffer with `d(sum_i dlogits[i] * logit_i)/dtheta`.
    pub fn backward(&mut self, tape: &ForwardTape, dlogits: &[f64]) -> Result<()> {
        if dlogits.len() != tape.n {
            return Err(Error::ShapeMismatch(format!(
                "{} logit gradients for {} points",
                dlogits.len(),
                tape.n
            )));
        }
        let n = tape.n;
        let offsets = self.layer_offsets();
        let mut delta = dlogits.to_vec();
        for l in (0..offsets.len()).rev() {
            let (w_off, b_off) = offsets[l];
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let input = &tape.inputs[l];
            // dW = delta^T * input, db = column sums of delta
            unsafe {
                dgemm(
                    fan_out,
                    n,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    self.grads[w_off..b_off].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let gb = &mut self.grads[b_off..b_off + fan_out];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta * W) .* act'(z_prev)
            let mut prev = vec![0.0; n * fan_in];
            unsafe {
                dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    self.params[w_off..b_off].as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let (z, a) = (&tape.pre[l - 1], &tape.inputs[l]);
            for ((d, &zv), &av) in prev.iter_mut().zip(z).zip(a) {
                *d *= self.activation.derivative(zv, av);
            }
            delta = prev;
        }
        Ok(())
    }

    /// Loss of a needle draw, evaluated at the pooled endpoints.
    pub fn needle_loss(&self, sample: &NeedleSample, cfg: &LossConfig) -> Result<LossBreakdown> {
        let logits = self.forward_logits(&sample.pooled_points());
        let (opp, same) = gather_pairs(sample, &logits);
        reconstruction_loss_with(&opp, &same, cfg)
    }

    /// Loss of a needle draw plus its parameter gradient, left in the
    /// gradient buffer.
    pub fn loss_and_grad(&mut self, sample: &NeedleSample, cfg: &LossConfig) -> Result<LossBreakdown> {
        let tape = self.forward_tape(&sample.pooled_points());
        let (opp, same) = gather_pairs(sample, tape.logits());
        let loss = reconstruction_loss_with(&opp, &same, cfg)?;
        let g = reconstruction_loss_grad(&opp, &same)?;
        let mut dlogits = vec![0.0; tape.n];
        for (pairs, grads) in [(&sample.opp.pairs, &g.opp), (&sample.same.pairs, &g.same)] {
            for (&[i, j], &(gx, gy)) in pairs.iter().zip(grads) {
                dlogits[i] += gx;
                dlogits[j] += gy;
            }
        }
        self.backward(&tape, &dlogits)?;
        Ok(loss)
    }
}

fn gather_pairs(sample: &NeedleSample, logits: &[f64]) -> (Vec<LogitPair>, Vec<LogitPair>) {
    let pick = |pairs: &[[usize; 2]]| {
        pairs
            .iter()
            .map(|&[i, j]| LogitPair::new(logits[i], logits[j]))
            .collect::<Vec<_>>()
    };
    (pick(&sample.opp.pairs), pick(&sample.same.pairs))
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
