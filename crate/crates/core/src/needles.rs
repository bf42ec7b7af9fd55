//! Needle construction and auditing.
//!
//! Opposite-side needles are short segments centered on the input points,
//! with a Gaussian half-offset whose scale follows the local point spacing.
//! Same-side needles join free-space samples to their nearest neighbor among
//! all opposite-side endpoints and the other free-space samples.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{Aabb, CrossingIndex, NearestNeighborIndex, Point3, PointCloud, TriangleMesh, Vec3};
use crate::loss::Target;
use crate::rng::{rng_from_seed, SeedSplitter, Stream};
use crate::{Error, Result};

/// Default number of same-side needles per draw.
pub const DEFAULT_N_SAME: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Needle {
    pub a: Point3,
    pub b: Point3,
    pub target: Target,
}

impl Needle {
    pub fn midpoint(&self) -> Point3 {
        nalgebra::center(&self.a, &self.b)
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeedleKind {
    Opposite,
    Same,
}

/// A needle set together with the points it was built from.
///
/// `points` holds P_opp (both endpoints of every needle, interleaved) for an
/// opposite-side set, or P_same for a same-side set. `pairs` index each
/// needle's endpoints into the pooled list `P_opp ++ P_same`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleSet {
    pub kind: NeedleKind,
    pub needles: Vec<Needle>,
    pub points: Vec<Point3>,
    pub pairs: Vec<[usize; 2]>,
}

impl NeedleSet {
    pub fn len(&self) -> usize {
        self.needles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.needles.is_empty()
    }
}

/// Per-point offset scale `sigma(p) = multiplier * d_p / 3`, where `d_p` is the
/// distance from `p` to its nearest neighbor in the cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaRule {
    multiplier: f64,
}

impl Default for SigmaRule {
    fn default() -> Self {
        Self { multiplier: 1.0 }
    }
}

impl SigmaRule {
    pub fn new(multiplier: f64) -> Result<Self> {
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma multiplier must be positive, got {multiplier}"
            )));
        }
        Ok(Self { multiplier })
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn sigma(&self, nn_distance: f64) -> f64 {
        self.multiplier * nn_distance / 3.0
    }
}

/// One opposite-side needle per cloud point: endpoints `p + h` and `p - h`
/// with `h` isotropic Gaussian of per-axis standard deviation `sigma(p)`.
pub fn sample_q_opp(cloud: &PointCloud, sigma: SigmaRule, seed: u64) -> Result<NeedleSet> {
    if cloud.len() < 2 {
        return Err(Error::TooFewPoints(cloud.len()));
    }
    let nn = cloud.nn_distances()?;
    let mut rng = rng_from_seed(seed);
    let mut needles = Vec::with_capacity(cloud.len());
    let mut points = Vec::with_capacity(2 * cloud.len());
    let mut pairs = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        let s = sigma.sigma(nn[i]);
        let h = loop {
            let n = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let h = n * s;
            if p + h != p - h {
                break h;
            }
        };
        let (a, b) = (p + h, p - h);
        needles.push(Needle {
            a,
            b,
            target: Target::Opposite,
        });
        pairs.push([points.len(), points.len() + 1]);
        points.push(a);
        points.push(b);
    }
    Ok(NeedleSet {
        kind: NeedleKind::Opposite,
        needles,
        points,
        pairs,
    })
}

/// `n_same` same-side needles: uniform samples in `domain`, each joined to its
/// nearest distinct neighbor in `p_opp ++ P_same`.
pub fn sample_q_same(p_opp: &[Point3], n_same: usize, domain: &Aabb, seed: u64) -> Result<NeedleSet> {
    if p_opp.is_empty() {
        return Err(Error::EmptyNeedleSet("opposite-side endpoints"));
    }
    if n_same == 0 {
        return Err(Error::InvalidArgument("n_same must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let ext = domain.extent();
    let p_same: Vec<Point3> = (0..n_same)
        .map(|_| {
            Point3::new(
                domain.min.x + ext.x * rng.gen::<f64>(),
                domain.min.y + ext.y * rng.gen::<f64>(),
                domain.min.z + ext.z * rng.gen::<f64>(),
            )
        })
        .collect();
    let pooled: Vec<Point3> = p_opp.iter().chain(p_same.iter()).copied().collect();
    let index = NearestNeighborIndex::build(&pooled)?;
    let base = p_opp.len();
    let mut needles = Vec::with_capacity(n_same);
    let mut pairs = Vec::with_capacity(n_same);
    for (j, p) in p_same.iter().enumerate() {
        let n = index.nearest_excluding(p, Some(base + j))?;
        needles.push(Needle {
            a: *p,
            b: n.point,
            target: Target::Same,
        });
        pairs.push([base + j, n.index]);
    }
    Ok(NeedleSet {
        kind: NeedleKind::Same,
        needles,
        points: p_same,
        pairs,
    })
}

/// Both needle sets of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleSample {
    pub opp: NeedleSet,
    pub same: NeedleSet,
}

impl NeedleSample {
    /// Pooled `P_opp ++ P_same`, the points that `pairs` index into.
    pub fn pooled_points(&self) -> Vec<Point3> {
        self.opp.points.iter().chain(self.same.points.iter()).copied().collect()
    }
}

/// Draws both sets from independent substreams of `seed`.
pub fn sample_needles(
    cloud: &PointCloud,
    sigma: SigmaRule,
    n_same: usize,
    domain: &Aabb,
    seed: u64,
) -> Result<NeedleSample> {
    let split = SeedSplitter::new(seed);
    let opp = sample_q_opp(cloud, sigma, split.seed(Stream::Offsets, 0))?;
    let same = sample_q_same(&opp.points, n_same, domain, split.seed(Stream::FreeSpace, 0))?;
    Ok(NeedleSample { opp, same })
}

/// Writes `ax ay az bx by bz target` per needle.
pub fn write_needles<W: Write>(needles: &[Needle], mut w: W) -> Result<()> {
    for n in needles {
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            n.a.x,
            n.a.y,
            n.a.z,
            n.b.x,
            n.b.y,
            n.b.z,
            n.target.value() as u8
        )?;
    }
    Ok(())
}

pub fn read_needles<R: BufRead>(r: R) -> Result<Vec<Needle>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| Error::Parse {
            line: n + 1,
            message: message.into(),
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 7 {
            return Err(err("expected 7 fields"));
        }
        let f: Vec<f64> = toks[..6]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err("invalid coordinate"))?;
        let target = toks[6]
            .parse::<u8>()
            .ok()
            .and_then(Target::from_value)
            .ok_or_else(|| err("target must be 0 or 1"))?;
        out.push(Needle {
            a: Point3::new(f[0], f[1], f[2]),
            b: Point3::new(f[3], f[4], f[5]),
            target,
        });
    }
    Ok(out)
}

/// A needle is good when its crossing parity matches its label: odd for
/// opposite-side needles, even for same-side ones.
pub fn needle_is_good(target: Target, crossings: usize) -> bool {
    match target {
        Target::Opposite => crossings % 2 == 1,
        Target::Same => crossings % 2 == 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetAudit {
    pub crossings: Vec<usize>,
    pub good: Vec<bool>,
    pub good_rate: f64,
}

/// Classifies every needle against `truth`. An empty set has rate 1.
pub fn audit_set(needles: &[Needle], truth: &CrossingIndex) -> Result<SetAudit> {
    let mut crossings = Vec::with_capacity(needles.len());
    let mut good = Vec::with_capacity(needles.len());
    for n in needles {
        let c = truth.segment_crossings(&n.a, &n.b)?;
        crossings.push(c);
        good.push(needle_is_good(n.target, c));
    }
    let count = good.iter().filter(|&&g| g).count();
    let good_rate = if good.is_empty() {
        1.0
    } else {
        count as f64 / good.len() as f64
    };
    Ok(SetAudit {
        crossings,
        good,
        good_rate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeedleAuditReport {
    pub opp_good_rate: f64,
    pub same_good_rate: f64,
    pub opp: SetAudit,
    pub same: SetAudit,
    /// Bad needles voting for the mesh vertex nearest their midpoint.
    pub vertex_votes: Vec<u32>,
}

impl NeedleAuditReport {
    /// Votes per vertex divided by the number of audited needles.
    pub fn error_density(&self) -> Vec<f64> {
        let total = (self.opp.good.len() + self.same.good.len()).max(1) as f64;
        self.vertex_votes.iter().map(|&v| v as f64 / total).collect()
    }
}

pub fn audit_needles(opp: &NeedleSet, same: &NeedleSet, truth: &TriangleMesh) -> Result<NeedleAuditReport> {
    let index = CrossingIndex::new(truth);
    let opp_audit = audit_set(&opp.needles, &index)?;
    let same_audit = audit_set(&same.needles, &index)?;
    let mut vertex_votes = vec![0u32; truth.vertices.len()];
    if !truth.vertices.is_empty() {
        let vindex = NearestNeighborIndex::build(&truth.vertices)?;
        let bad = opp
            .needles
            .iter()
            .zip(&opp_audit.good)
            .chain(same.needles.iter().zip(&same_audit.good))
            .filter(|(_, &g)| !g);
        for (n, _) in bad {
            vertex_votes[vindex.nearest(&n.midpoint()).index] += 1;
        }
    }
    Ok(NeedleAuditReport {
        opp_good_rate: opp_audit.good_rate,
        same_good_rate: same_audit.good_rate,
        opp: opp_audit,
        same: same_audit,
        vertex_votes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub opp_good_rate: f64,
    pub same_good_rate: f64,
    pub opp_needles: usize,
    pub same_needles: usize,
}

/// Good-needle rates as a function of the sigma multiplier, pooled over
/// `draws` independent needle draws. Draw `d` uses the same random numbers
/// for every multiplier, so rows differ only through the offset scale.
pub fn audit_sweep(
    cloud: &PointCloud,
    truth: &TriangleMesh,
    alphas: &[f64],
    n_same: usize,
    domain: &Aabb,
    draws: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be at least 1".into()));
    }
    let index = CrossingIndex::new(truth);
    let split = SeedSplitter::new(seed);
    alphas
        .iter()
        .map(|&alpha| {
            let sigma = SigmaRule::new(alpha)?;
            let (mut opp_good, mut opp_total, mut same_good, mut same_total) = (0, 0, 0, 0);
            for d in 0..draws as u64 {
                let opp = sample_q_opp(cloud, sigma, split.seed(Stream::Offsets, d))?;
                let same = sample_q_same(&opp.points, n_same, domain, split.seed(Stream::FreeSpace, d))?;
                let oa = audit_set(&opp.needles, &index)?;
                let sa = audit_set(&same.needles, &index)?;
                opp_good += oa.good.iter().filter(|&&g| g).count();
                opp_total += oa.good.len();
                same_good += sa.good.iter().filter(|&&g| g).count();
                same_total += sa.good.len();
            }
            Ok(SweepRow {
                alpha,
                opp_good_rate: opp_good as f64 / opp_total as f64,
                same_good_rate: same_good as f64 / same_total as f64,
                opp_needles: opp_total,
                same_needles: same_total,
            })
        })
        .collect()
}
