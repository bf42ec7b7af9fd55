//! Per-shape training loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::info;

use super::{AdamState, ModelConfig, OccupancyModel};
use crate::geometry::{Aabb, PointCloud};
use crate::loss::{LossBreakdown, LossConfig};
use crate::needles::{sample_q_opp, sample_q_same, NeedleSample, SigmaRule, DEFAULT_N_SAME};
use crate::rng::{SeedSplitter, Stream};
use crate::{Error, Result};

/// How needles are drawn across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Fresh offsets and free-space points every iteration.
    Resample,
    /// One draw reused for every iteration (redrawn only when the sigma
    /// multiplier changes).
    Fixed,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Resample => "resample",
            Regime::Fixed => "fixed",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resample" => Ok(Regime::Resample),
            "fixed" => Ok(Regime::Fixed),
            _ => Err(Error::InvalidArgument(format!(
                "unknown regime {s:?} (expected resample or fixed)"
            ))),
        }
    }
}

/// Piecewise-constant sigma multiplier over iterations, written
/// `multiplier:start,...`, e.g. `1.0:0,0.5:2000`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    steps: Vec<(f64, usize)>,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self { steps: vec![(1.0, 0)] }
    }
}

impl SigmaSchedule {
    pub fn new(steps: Vec<(f64, usize)>) -> Result<Self> {
        if steps.first().map(|s| s.1) != Some(0) {
            return Err(Error::InvalidArgument("sigma schedule must start at iteration 0".into()));
        }
        if steps.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(Error::InvalidArgument(
                "sigma schedule iterations must be strictly increasing".into(),
            ));
        }
        for &(m, _) in &steps {
            SigmaRule::new(m)?;
        }
        Ok(Self { steps })
    }

    pub fn constant(multiplier: f64) -> Result<Self> {
        Self::new(vec![(multiplier, 0)])
    }

    pub fn steps(&self) -> &[(f64, usize)] {
        &self.steps
    }

    pub fn multiplier_at(&self, iteration: usize) -> f64 {
        self.steps
            .iter()
            .rev()
            .find(|s| s.1 <= iteration)
            .map(|s| s.0)
            .unwrap_or(self.steps[0].0)
    }
}

impl FromStr for SigmaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("invalid sigma schedule {s:?}"));
        let steps = s
            .split(',')
            .map(|part| {
                let (m, it) = part.trim().split_once(':').ok_or_else(bad)?;
                Ok((
                    m.trim().parse::<f64>().map_err(|_| bad())?,
                    it.trim().parse::<usize>().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}

impl fmt::Display for SigmaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|(m, i)| format!("{m}:{i}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub n_same: usize,
    pub regime: Regime,
    pub schedule: SigmaSchedule,
    pub lr: f64,
    pub seed: u64,
    pub domain: Aabb,
    pub model: ModelConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            n_same: DEFAULT_N_SAME,
            regime: Regime::Resample,
            schedule: SigmaSchedule::default(),
            lr: AdamState::DEFAULT_LR,
            seed: 0,
            domain: Aabb::unit_domain(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        if self.n_same == 0 {
            return Err(Error::InvalidArgument("n_same must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub sigma_multiplier: f64,
    pub loss: LossBreakdown,
}

/// A change of the sigma multiplier taking effect at `iteration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEvent {
    pub iteration: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: OccupancyModel,
    pub history: Vec<LossRecord>,
    pub events: Vec<SigmaEvent>,
}

/// Resumable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    cloud: PointCloud,
    cfg: TrainConfig,
    model: OccupancyModel,
    adam: AdamState,
    splitter: SeedSplitter,
    iteration: usize,
    history: Vec<LossRecord>,
    events: Vec<SigmaEvent>,
    fixed: Option<(f64, NeedleSample)>,
}

impl Trainer {
    pub fn new(cloud: PointCloud, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cloud.len() < 2 {
            return Err(Error::TooFewPoints(cloud.len()));
        }
        let model = OccupancyModel::new(&cfg.model, cfg.seed);
        let adam = AdamState::new(model.num_params(), cfg.lr);
        Ok(Self {
            splitter: SeedSplitter::new(cfg.seed),
            cloud,
            model,
            adam,
            cfg,
            iteration: 0,
            history: Vec::new(),
            events: Vec::new(),
            fixed: None,
        })
    }

    pub fn model(&self) -> &OccupancyModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn events(&self) -> &[SigmaEvent] {
        &self.events
    }

    fn draw(&self, multiplier: f64, index: u64) -> Result<NeedleSample> {
        let opp = sample_q_opp(
            &self.cloud,
            SigmaRule::new(multiplier)?,
            self.splitter.seed(Stream::Offsets, index),
        )?;
        let same = sample_q_same(
            &opp.points,
            self.cfg.n_same,
            &self.cfg.domain,
            self.splitter.seed(Stream::FreeSpace, index),
        )?;
        Ok(NeedleSample { opp, same })
    }

    /// Needles used at the current iteration.
    pub fn current_needles(&mut self) -> Result<NeedleSample> {
        let it = self.iteration;
        let multiplier = self.cfg.schedule.multiplier_at(it);
        let changed = match self.events.last() {
            None => true,
            Some(e) => e.multiplier != multiplier,
        };
        if changed {
            if !self.events.is_empty() {
                info!("iteration {it}: sigma multiplier -> {multiplier}");
            }
            self.events.push(SigmaEvent {
                iteration: it,
                multiplier,
            });
        }
        match self.cfg.regime {
            Regime::Resample => self.draw(multiplier, it as u64),
            Regime::Fixed => {
                if changed || self.fixed.is_none() {
                    self.fixed = Some((multiplier, self.draw(multiplier, it as u64)?));
                }
                Ok(self.fixed.as_ref().unwrap().1.clone())
            }
        }
    }

    /// One optimization step.
    pub fn step(&mut self) -> Result<LossRecord> {
        let needles = self.current_needles()?;
        let loss = self.model.loss_and_grad(&needles, &self.cfg.loss)?;
        let it = self.iteration;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                l_opp: loss.l_opp,
                l_same: loss.l_same,
            });
        }
        let grads = self.model.grads().to_vec();
        self.adam.step(self.model.params_mut(), &grads)?;
        let record = LossRecord {
            iteration: it,
            sigma_multiplier: self.cfg.schedule.multiplier_at(it),
            loss,
        };
        self.history.push(record);
        self.iteration += 1;
        Ok(record)
    }

    /// Runs up to `steps` iterations, stopping at the configured budget.
    pub fn run(&mut self, steps: usize, mut on_record: impl FnMut(&LossRecord) -> Result<()>) -> Result<()> {
        let end = (self.iteration + steps).min(self.cfg.iterations);
        while self.iteration < end {
            let r = self.step()?;
            on_record(&r)?;
            if r.iteration % 500 == 0 {
                info!(
                    "iter {} l_opp {:.5} l_same {:.5} total {:.5}",
                    r.iteration, r.loss.l_opp, r.loss.l_same, r.loss.l_total
                );
            }
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            history: self.history,
            events: self.events,
        }
    }
}

/// Trains a fresh model on `cloud` for `cfg.iterations` steps.
pub fn fit_shape(cloud: &PointCloud, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cloud.clone(), cfg.clone())?;
    trainer.run(cfg.iterations, |_| Ok(()))?;
    Ok(trainer.into_outcome())
}

/// Streams `iter,l_opp,l_same,l_total` rows, flushing after each one so a
/// partial history survives an aborted run.
pub struct LossCsvWriter<W: Write> {
    inner: W,
}

impl<W: Write> LossCsvWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "iter,l_opp,l_same,l_total")?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &LossRecord) -> Result<()> {
        writeln!(
            self.inner,
            "{},{},{},{}",
            r.iteration, r.loss.l_opp, r.loss.l_same, r.loss.l_total
        )?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_loss_csv<W: Write>(history: &[LossRecord], w: W) -> Result<()> {
    let mut csv = LossCsvWriter::new(w)?;
    for r in history {
        csv.write(r)?;
    }
    Ok(())
}
