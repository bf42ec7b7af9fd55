//! Reconstruction metrics: symmetric Chamfer distance, percentile Chamfer and
//! grid IoU.

use std::io::Write;

use crate::field::ScalarGrid;
use crate::geometry::{sample_surface, Aabb, CrossingIndex, NearestNeighborIndex, Point3, PointCloud, TriangleMesh};
use crate::{Error, Result};

/// Default quantiles for percentile Chamfer.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferReport {
    /// Mean of plain nearest distances, averaged over both directions.
    pub l1: f64,
    /// Mean of squared nearest distances, averaged over both directions.
    pub l2: f64,
    pub a_to_b_l1: f64,
    pub b_to_a_l1: f64,
    pub a_to_b_l2: f64,
    pub b_to_a_l2: f64,
    /// Nearest distance from each point of `a` to `b`, then from `b` to `a`.
    pub distances: Vec<f64>,
}

impl ChamferReport {
    /// `l1` for `power == 1`, `l2` for `power == 2`.
    pub fn value(&self, power: u32) -> Result<f64> {
        match power {
            1 => Ok(self.l1),
            2 => Ok(self.l2),
            p => Err(Error::InvalidArgument(format!("chamfer power must be 1 or 2, got {p}"))),
        }
    }
}

fn directed(from: &[Point3], to: &NearestNeighborIndex) -> Vec<f64> {
    from.iter().map(|p| to.nearest(p).distance).collect()
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    let v: Vec<f64> = xs.collect();
    crate::loss::pairwise_sum(&v) / n as f64
}

pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<ChamferReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    let ia = NearestNeighborIndex::build(a.points())?;
    let ib = NearestNeighborIndex::build(b.points())?;
    let ab = directed(a.points(), &ib);
    let ba = directed(b.points(), &ia);
    let a_to_b_l1 = mean(ab.iter().copied(), ab.len());
    let b_to_a_l1 = mean(ba.iter().copied(), ba.len());
    let a_to_b_l2 = mean(ab.iter().map(|d| d * d), ab.len());
    let b_to_a_l2 = mean(ba.iter().map(|d| d * d), ba.len());
    let mut distances = ab;
    distances.extend(ba);
    Ok(ChamferReport {
        l1: 0.5 * (a_to_b_l1 + b_to_a_l1),
        l2: 0.5 * (a_to_b_l2 + b_to_a_l2),
        a_to_b_l1,
        b_to_a_l1,
        a_to_b_l2,
        b_to_a_l2,
        distances,
    })
}

/// Lower quantiles of `distances`: the value at sorted index `ceil(q n) - 1`.
pub fn quantiles(distances: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    if let Some(&q) = qs.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
        return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1], got {q}")));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(qs
        .iter()
        .map(|&q| {
            let k = ((q * n as f64).ceil() as usize).clamp(1, n);
            sorted[k - 1]
        })
        .collect())
}

/// Quantiles of the nearest distances pooled from both directions.
pub fn chamfer_percentiles(a: &PointCloud, b: &PointCloud, qs: &[f64]) -> Result<Vec<f64>> {
    quantiles(&chamfer(a, b)?.distances, qs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoUReport {
    pub intersection: usize,
    pub union: usize,
    pub ratio: f64,
    /// Set when neither grid has an occupied node; `ratio` is then 1.
    pub empty_union: bool,
}

pub fn volumetric_iou(pred: &ScalarGrid, truth: &ScalarGrid, threshold: f64) -> Result<IoUReport> {
    if pred.resolution() != truth.resolution() || pred.domain() != truth.domain() {
        return Err(Error::ShapeMismatch(format!(
            "grids differ: {:?} over {:?} vs {:?} over {:?}",
            pred.resolution(),
            pred.domain(),
            truth.resolution(),
            truth.domain()
        )));
    }
    let (mut intersection, mut union) = (0, 0);
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        let (p, t) = (p > threshold, t > threshold);
        intersection += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(IoUReport {
        intersection,
        union,
        ratio: if union == 0 { 1.0 } else { intersection as f64 / union as f64 },
        empty_union: union == 0,
    })
}

/// Binary occupancy of a closed mesh at every node of a lattice.
pub fn mesh_occupancy_grid(mesh: &TriangleMesh, domain: &Aabb, res: [usize; 3]) -> ScalarGrid {
    if mesh.faces.is_empty() {
        return ScalarGrid::from_fn(*domain, res, |_| 0.0);
    }
    let index = CrossingIndex::new(mesh);
    ScalarGrid::from_fn(*domain, res, |p| index.occupancy(p) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    pub quantiles: Vec<f64>,
    pub domain: Aabb,
    pub resolution: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            domain: Aabb::unit_domain(),
            resolution: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub chamfer_l1: f64,
    pub chamfer_l2: f64,
    pub quantiles: Vec<f64>,
    pub quantile_values: Vec<f64>,
    pub iou: f64,
}

impl EvalReport {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["chamfer_l1".to_string(), "chamfer_l2".to_string()];
        cols.extend(self.quantiles.iter().map(|q| format!("p{}", q * 100.0)));
        cols.push("iou".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.chamfer_l1.to_string(), self.chamfer_l2.to_string()];
        cols.extend(self.quantile_values.iter().map(|v| v.to_string()));
        cols.push(self.iou.to_string());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        writeln!(w, "{}", self.csv_row())?;
        Ok(())
    }
}

/// Chamfer over seeded surface samples plus IoU of mesh occupancy grids.
/// An empty prediction yields infinite Chamfer values and IoU 0.
pub fn evaluate_meshes(pred: &TriangleMesh, truth: &TriangleMesh, opts: &EvalOptions) -> Result<EvalReport> {
    let res = [opts.resolution; 3];
    let truth_cloud = sample_surface(truth, opts.samples, opts.seed)?;
    if pred.faces.is_empty() || pred.total_area() == 0.0 {
        return Ok(EvalReport {
            chamfer_l1: f64::INFINITY,
            chamfer_l2: f64::INFINITY,
            quantiles: opts.quantiles.clone(),
            quantile_values: vec![f64::INFINITY; opts.quantiles.len()],
            iou: 0.0,
        });
    }
    let pred_cloud = sample_surface(pred, opts.samples, opts.seed)?;
    let c = chamfer(&pred_cloud, &truth_cloud)?;
    let quantile_values = quantiles(&c.distances, &opts.quantiles)?;
    let iou = volumetric_iou(
        &mesh_occupancy_grid(pred, &opts.domain, res),
        &mesh_occupancy_grid(truth, &opts.domain, res),
        0.5,
    )?;
    Ok(EvalReport {
        chamfer_l1: c.l1,
        chamfer_l2: c.l2,
        quantiles: opts.quantiles.clone(),
        quantile_values,
        iou: iou.ratio,
    })
}
