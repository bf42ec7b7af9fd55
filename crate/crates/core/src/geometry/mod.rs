//! Spatial types and ground-truth geometric queries.

mod bvh;
pub mod io;
mod kdtree;
mod sampling;

use std::collections::HashMap;
use std::sync::OnceLock;

pub use bvh::{mesh_occupancy, segment_crossings, CrossingIndex, OCCUPANCY_RAY};
pub use kdtree::{NearestNeighborIndex, Neighbor};
pub use sampling::sample_surface;

use crate::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if !(min.coords.iter().all(|c| c.is_finite()) && max.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite("bounding box"));
        }
        if (0..3).any(|k| min[k] > max[k]) {
            return Err(Error::InvalidArgument(format!(
                "bounding box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    /// Cube `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Self {
            min: Point3::new(-half, -half, -half),
            max: Point3::new(half, half, half),
        }
    }

    /// The normalized working domain `[-0.55, 0.55]^3`.
    pub fn unit_domain() -> Self {
        Self::cube(0.55)
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let (mut min, mut max) = (first, first);
        for p in iter {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// The 8 corners, x varying fastest.
    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [self.min; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Point3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
        }
        out
    }
}

/// Ordered 3D samples. The only supervision available to the fitter.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    nn_cache: OnceLock<Vec<f64>>,
}

impl PartialEq for PointCloud {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self {
            points,
            nn_cache: OnceLock::new(),
        })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn transformed(&self, t: &NormalizeTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            nn_cache: OnceLock::new(),
        }
    }

    /// Distance from each point to its nearest distinct neighbor, computed once.
    pub fn nn_distances(&self) -> Result<&[f64]> {
        if let Some(d) = self.nn_cache.get() {
            return Ok(d);
        }
        let index = NearestNeighborIndex::build(&self.points)?;
        let d = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| index.nearest_excluding(p, Some(i)).map(|n| n.distance))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.nn_cache.get_or_init(|| d))
    }
}

/// Vertices plus triangles given as vertex-index triples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices and finiteness. Degenerate faces are kept; see
    /// [`TriangleMesh::without_degenerate_faces`].
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertices"));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::FaceIndexOutOfRange {
                    face: fi,
                    index,
                    count: vertices.len(),
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Drops faces with repeated indices or zero area.
    pub fn without_degenerate_faces(mut self) -> Self {
        let vertices = &self.vertices;
        self.faces.retain(|&[a, b, c]| {
            if a == b || b == c || a == c {
                return false;
            }
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            (pb - pa).cross(&(pc - pa)).norm() > 0.0
        });
        self
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Signed enclosed volume; positive when faces wind counter-clockwise
    /// seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.vertices[a].coords, self.vertices[b].coords, self.vertices[c].coords);
                pa.dot(&pb.cross(&pc)) / 6.0
            })
            .sum()
    }

    /// Number of faces incident to each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                *counts.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge shared by exactly two faces.
    pub fn is_edge_manifold_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    pub fn flipped(mut self) -> Self {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
        self
    }

    pub fn transformed(&self, t: &NormalizeTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| t.apply(p)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Maps a shape into the working frame: `p -> (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform {
    pub center: Point3,
    pub scale: f64,
}

impl NormalizeTransform {
    /// Fraction of the unit cube width left empty on each side.
    pub const PADDING: f64 = 0.05;

    /// Centers `bounds` at the origin and scales its longest side to
    /// `1 - 2 * PADDING`, so it fits in `[-0.5, 0.5]^3` with padding.
    pub fn fit(bounds: &Aabb) -> Result<Self> {
        let longest = bounds.extent().max();
        if !(longest > 0.0) {
            return Err(Error::InvalidArgument(
                "cannot normalize a shape with zero extent".into(),
            ));
        }
        Ok(Self {
            center: bounds.center(),
            scale: (1.0 - 2.0 * Self::PADDING) / longest,
        })
    }

    pub fn identity() -> Self {
        Self {
            center: Point3::origin(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from((p - self.center) * self.scale)
    }
}
