//! Needle cross-entropy.
//!
//! For a needle with endpoint logits `(phi_x, phi_y)`, the probability that two
//! independent occupancy draws at the endpoints agree is
//! `b = s(phi_x) s(phi_y) + (1 - s(phi_x)) (1 - s(phi_y))`. The loss is the
//! binary cross-entropy between `b` and the needle target (1 for same-side,
//! 0 for opposite-side), which reduces to
//!
//! ```text
//! sp(phi_x) + sp(phi_y) - t * sp(phi_x + phi_y) - (1 - t) * lse(phi_x, phi_y)
//! ```
//!
//! with `sp(a) = log(1 + e^a)` and `lse(a, b) = log(e^a + e^b)`.
//!
//! The forward pass clamps logits to `[-CLAMP, CLAMP]`; the backward pass uses
//! the unclamped logits. Beyond the clamp the two are therefore not exact
//! derivatives of each other.

use crate::{Error, Result};

/// Logit clamp applied before the forward evaluation.
pub const CLAMP: f64 = 10.0;
/// Lowest clamp bound accepted by [`LossConfig`].
pub const MIN_CLAMP: f64 = 5.0;

/// Needle label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Endpoints on opposite sides of the surface (`b0 = 0`).
    Opposite,
    /// Endpoints on the same side (`b0 = 1`).
    Same,
}

impl Target {
    pub fn value(self) -> f64 {
        match self {
            Target::Opposite => 0.0,
            Target::Same => 1.0,
        }
    }

    pub fn from_value(v: u8) -> Option<Self> {
        match v {
            0 => Some(Target::Opposite),
            1 => Some(Target::Same),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitPair {
    pub phi_x: f64,
    pub phi_y: f64,
}

impl LogitPair {
    pub fn new(phi_x: f64, phi_y: f64) -> Self {
        Self { phi_x, phi_y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { clamp: CLAMP }
    }
}

impl LossConfig {
    pub fn with_clamp(clamp: f64) -> Result<Self> {
        if !(clamp >= MIN_CLAMP) || !clamp.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "logit clamp must be a finite value >= {MIN_CLAMP}, got {clamp}"
            )));
        }
        Ok(Self { clamp })
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }
}

/// `log(e^a + 1)` without overflow.
#[inline]
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// `log(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that two independent Bernoulli draws with parameters `b_x` and
/// `b_y` agree.
pub fn composite_bernoulli(b_x: f64, b_y: f64) -> Result<f64> {
    for b in [b_x, b_y] {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidProbability(b));
        }
    }
    Ok(b_x * b_y + (1.0 - b_x) * (1.0 - b_y))
}

/// Per-needle loss with the default clamp.
pub fn needle_bce_forward(p: LogitPair, target: Target) -> f64 {
    needle_bce_forward_with(p, target, CLAMP)
}

pub fn needle_bce_forward_with(p: LogitPair, target: Target, clamp: f64) -> f64 {
    let x = p.phi_x.clamp(-clamp, clamp);
    let y = p.phi_y.clamp(-clamp, clamp);
    let base = softplus(x) + softplus(y);
    match target {
        Target::Same => base - softplus(x + y),
        Target::Opposite => base - log_add_exp(x, y),
    }
}

/// Gradient of the per-needle loss with respect to `(phi_x, phi_y)`,
/// evaluated on the unclamped logits.
pub fn needle_bce_backward(p: LogitPair, target: Target) -> (f64, f64) {
    let (x, y) = (p.phi_x, p.phi_y);
    match target {
        Target::Same => {
            let s = sigmoid(x + y);
            (sigmoid(x) - s, sigmoid(y) - s)
        }
        Target::Opposite => (sigmoid(x) - sigmoid(x - y), sigmoid(y) - sigmoid(y - x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_opp: f64,
    pub l_same: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn new(l_opp: f64, l_same: f64) -> Self {
        Self {
            l_opp,
            l_same,
            l_total: l_opp + l_same,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_opp.is_finite() && self.l_same.is_finite() && self.l_total.is_finite()
    }
}

/// Gradients of [`reconstruction_loss`] with respect to every logit, in the
/// order the pairs were given.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGradients {
    pub opp: Vec<(f64, f64)>,
    pub same: Vec<(f64, f64)>,
}

/// Fixed-order pairwise summation.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean_loss(pairs: &[LogitPair], target: Target, clamp: f64) -> f64 {
    let terms: Vec<f64> = pairs
        .iter()
        .map(|&p| needle_bce_forward_with(p, target, clamp))
        .collect();
    pairwise_sum(&terms) / pairs.len() as f64
}

/// `L_opp + L_same`, each the mean needle loss over its set.
pub fn reconstruction_loss(opp: &[LogitPair], same: &[LogitPair]) -> Result<LossBreakdown> {
    reconstruction_loss_with(opp, same, &LossConfig::default())
}

pub fn reconstruction_loss_with(
    opp: &[LogitPair],
    same: &[LogitPair],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if opp.is_empty() {
        return Err(Error::EmptyNeedleSet("opposite-side"));
    }
    if same.is_empty() {
        return Err(Error::EmptyNeedleSet("same-side"));
    }
    Ok(LossBreakdown::new(
        mean_loss(opp, Target::Opposite, cfg.clamp),
        mean_loss(same, Target::Same, cfg.clamp),
    ))
}

/// Logit gradients of [`reconstruction_loss`], carrying the `1/|Q|` weights.
pub fn reconstruction_loss_grad(opp: &[LogitPair], same: &[LogitPair]) -> Result<LogitGradients> {
    if opp.is_empty() {
        return Err(Error::EmptyNeedleSet("opposite-side"));
    }
    if same.is_empty() {
        return Err(Error::EmptyNeedleSet("same-side"));
    }
    let scaled = |pairs: &[LogitPair], target| {
        let w = 1.0 / pairs.len() as f64;
        pairs
            .iter()
            .map(|&p| {
                let (gx, gy) = needle_bce_backward(p, target);
                (gx * w, gy * w)
            })
            .collect()
    };
    Ok(LogitGradients {
        opp: scaled(opp, Target::Opposite),
        same: scaled(same, Target::Same),
    })
}
