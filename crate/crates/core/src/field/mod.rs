//! Dense occupancy grids and iso-surface extraction.

mod mc;
mod tables;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub use mc::{marching_cubes, Extraction, ExtractionStatus};

use crate::geometry::{Aabb, Point3};
use crate::model::OccupancyModel;
use crate::{Error, Result};

/// Default lattice resolution per axis.
pub const DEFAULT_RESOLUTION: usize = 64;

/// Regular lattice of values over an axis-aligned domain. Node `(i, j, k)`
/// sits at `min + extent * (i, j, k) / (res - 1)`; storage is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    domain: Aabb,
    res: [usize; 3],
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(domain: Aabb, res: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if res.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 2 per axis, got {res:?}"
            )));
        }
        let count = res[0] * res[1] * res[2];
        if values.len() != count {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {res:?} grid ({count} nodes)",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(Self { domain, res, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(domain: Aabb, res: [usize; 3], mut f: impl FnMut(&Point3) -> f64) -> Self {
        assert!(res.iter().all(|&r| r >= 2), "grid resolution must be at least 2");
        let mut values = Vec::with_capacity(res[0] * res[1] * res[2]);
        for k in 0..res[2] {
            for j in 0..res[1] {
                for i in 0..res[0] {
                    values.push(f(&node_position(&domain, res, [i, j, k])));
                }
            }
        }
        Self { domain, res, values }
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.res
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.res[0] * (j + self.res[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.flat_index(i, j, k)]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3 {
        node_position(&self.domain, self.res, [i, j, k])
    }

    /// Node positions in storage order.
    pub fn positions(&self) -> Vec<Point3> {
        let mut out = Vec::with_capacity(self.values.len());
        for k in 0..self.res[2] {
            for j in 0..self.res[1] {
                for i in 0..self.res[0] {
                    out.push(self.position(i, j, k));
                }
            }
        }
        out
    }

    /// `v -> 1 - v` at every node.
    pub fn complemented(&self) -> Self {
        Self {
            domain: self.domain,
            res: self.res,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Values at the 8 domain corners.
    pub fn corner_values(&self) -> [f64; 8] {
        let [nx, ny, nz] = self.res;
        let mut out = [0.0; 8];
        for (c, v) in out.iter_mut().enumerate() {
            let i = if c & 1 == 0 { 0 } else { nx - 1 };
            let j = if c & 2 == 0 { 0 } else { ny - 1 };
            let k = if c & 4 == 0 { 0 } else { nz - 1 };
            *v = self.get(i, j, k);
        }
        out
    }

    /// Flat binary dump: one text header line
    /// `res_x res_y res_z min_x min_y min_z max_x max_y max_z`, then the
    /// values as little-endian f64, x fastest.
    pub fn write_volume(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let (lo, hi) = (self.domain.min, self.domain.max);
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            self.res[0], self.res[1], self.res[2], lo.x, lo.y, lo.z, hi.x, hi.y, hi.z
        )?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_volume(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(fs::File::open(path)?);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 9 {
            return Err(Error::Parse {
                line: 1,
                message: "volume header needs 9 fields".into(),
            });
        }
        let bad = |_| Error::Parse {
            line: 1,
            message: "invalid volume header".into(),
        };
        let res = [
            toks[0].parse::<usize>().map_err(bad)?,
            toks[1].parse::<usize>().map_err(bad)?,
            toks[2].parse::<usize>().map_err(bad)?,
        ];
        let f: Vec<f64> = toks[3..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: 1,
                message: "invalid volume bounds".into(),
            })?;
        let domain = Aabb::new(Point3::new(f[0], f[1], f[2]), Point3::new(f[3], f[4], f[5]))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(domain, res, values)
    }
}

fn node_position(domain: &Aabb, res: [usize; 3], idx: [usize; 3]) -> Point3 {
    let ext = domain.extent();
    let mut p = domain.min;
    for a in 0..3 {
        p[a] += ext[a] * (idx[a] as f64 / (res[a] - 1) as f64);
    }
    p
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Occupancy probabilities `sigmoid(logit)` of `model` at every node.
pub fn evaluate_grid(model: &OccupancyModel, domain: &Aabb, res: [usize; 3]) -> Result<ScalarGrid> {
    if res.iter().any(|&r| r < 2) {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2 per axis, got {res:?}"
        )));
    }
    let positions = ScalarGrid::from_fn(*domain, res, |_| 0.0).positions();
    let mut values = Vec::with_capacity(positions.len());
    for chunk in positions.chunks(4096) {
        values.extend(model.forward_logits(chunk).into_iter().map(sigmoid));
    }
    ScalarGrid::new(*domain, res, values)
}

/// Resolves the inside/outside ambiguity of the fitted field: the domain
/// boundary is taken to be empty, so a grid whose corners average above 0.5
/// is complemented. The 0.5 level set is unchanged.
pub fn orient_field(grid: &ScalarGrid) -> ScalarGrid {
    let corners = grid.corner_values();
    let mean = corners.iter().sum::<f64>() / 8.0;
    if mean > 0.5 {
        grid.complemented()
    } else {
        grid.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, OccupancyModel, OutputInit};

    fn zero_model() -> OccupancyModel {
        OccupancyModel::new(
            &ModelConfig {
                hidden: vec![8, 8],
                output_init: OutputInit::Zero,
                ..ModelConfig::default()
            },
            1,
        )
    }

    fn random_model() -> OccupancyModel {
        OccupancyModel::new(
            &ModelConfig {
                hidden: vec![16, 16],
                output_init: OutputInit::Uniform(1.0),
                ..ModelConfig::default()
            },
            5,
        )
    }

    #[test]
    fn zero_logit_model_gives_half_everywhere() {
        let g = evaluate_grid(&zero_model(), &Aabb::unit_domain(), [5, 6, 7]).unwrap();
        assert_eq!(g.len(), 5 * 6 * 7);
        assert!(g.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn corner_value_matches_pointwise_forward() {
        let m = random_model();
        let d = Aabb::unit_domain();
        let g = evaluate_grid(&m, &d, [9, 9, 9]).unwrap();
        let l = m.forward_logits(&[d.max])[0];
        assert_eq!(g.get(8, 8, 8), sigmoid(l));
        assert_eq!(g.position(8, 8, 8), d.max);
        assert_eq!(g.position(0, 0, 0), d.min);
    }

    #[test]
    fn nested_resolutions_agree_on_shared_nodes() {
        let m = random_model();
        let d = Aabb::unit_domain();
        let coarse = evaluate_grid(&m, &d, [33; 3]).unwrap();
        let fine = evaluate_grid(&m, &d, [65; 3]).unwrap();
        for k in 0..33 {
            for j in 0..33 {
                for i in 0..33 {
                    assert_eq!(coarse.get(i, j, k), fine.get(2 * i, 2 * j, 2 * k));
                }
            }
        }
        // 32 and 64 nodes per axis only share the domain corners
        let a = evaluate_grid(&m, &d, [32; 3]).unwrap();
        let b = evaluate_grid(&m, &d, [64; 3]).unwrap();
        assert_eq!(a.corner_values(), b.corner_values());
    }

    #[test]
    fn low_resolution_rejected() {
        assert!(evaluate_grid(&zero_model(), &Aabb::unit_domain(), [1, 4, 4]).is_err());
        assert!(ScalarGrid::new(Aabb::unit_domain(), [2, 2, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn orientation() {
        let d = Aabb::unit_domain();
        let low = ScalarGrid::from_fn(d, [4; 3], |_| 0.2);
        assert_eq!(orient_field(&low), low);
        let high = ScalarGrid::from_fn(d, [4; 3], |_| 0.8);
        let o = orient_field(&high);
        assert!(o.values().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn volume_roundtrip() {
        let g = ScalarGrid::from_fn(Aabb::unit_domain(), [3, 4, 5], |p| p.x * p.x + 0.1 * p.y);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.vol");
        g.write_volume(&path).unwrap();
        assert_eq!(ScalarGrid::read_volume(&path).unwrap(), g);
    }
}
