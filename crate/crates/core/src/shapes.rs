//! Analytic test shapes: closed meshes plus their exact inside/outside
//! indicators, all living in the normalized frame.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::field::{marching_cubes, ScalarGrid};
use crate::geometry::{Aabb, Point3, TriangleMesh};

/// Outward-oriented icosphere centered at the origin.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(nalgebra::Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords).normalize();
                vertices.push(Point3::from(m));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v = Point3::from(v.coords * radius);
    }
    TriangleMesh { vertices, faces }
}

pub fn sphere_indicator(p: &Point3, radius: f64) -> bool {
    p.coords.norm() < radius
}

/// Torus around the z axis with `major` ring radius and `minor` tube radius.
pub fn torus(major: f64, minor: f64, ring_segments: usize, tube_segments: usize) -> TriangleMesh {
    let (nu, nv) = (ring_segments, tube_segments);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, faces }
}

pub fn torus_indicator(p: &Point3, major: f64, minor: f64) -> bool {
    let ring = (p.x * p.x + p.y * p.y).sqrt() - major;
    ring * ring + p.z * p.z < minor * minor
}

/// Outward-oriented axis-aligned box.
pub fn box_mesh(bounds: &Aabb) -> TriangleMesh {
    let vertices = bounds.corners().to_vec();
    // corners: bit 0 = x, bit 1 = y, bit 2 = z
    let faces = vec![
        [0, 2, 3], [0, 3, 1], // z-
        [4, 5, 7], [4, 7, 6], // z+
        [0, 1, 5], [0, 5, 4], // y-
        [2, 6, 7], [2, 7, 3], // y+
        [0, 4, 6], [0, 6, 2], // x-
        [1, 3, 7], [1, 7, 5], // x+
    ];
    TriangleMesh { vertices, faces }
}

/// Two spheres joined by a thin bar along x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dumbbell {
    pub lobe_radius: f64,
    pub lobe_offset: f64,
    pub bar_radius: f64,
}

impl Default for Dumbbell {
    fn default() -> Self {
        Self {
            lobe_radius: 0.2,
            lobe_offset: 0.22,
            bar_radius: 0.08,
        }
    }
}

impl Dumbbell {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        let lobe = |cx: f64| {
            ((p.x - cx).powi(2) + p.y * p.y + p.z * p.z).sqrt() - self.lobe_radius
        };
        let clamped = p.x.clamp(-self.lobe_offset, self.lobe_offset);
        let bar = ((p.x - clamped).powi(2) + p.y * p.y + p.z * p.z).sqrt() - self.bar_radius;
        lobe(-self.lobe_offset).min(lobe(self.lobe_offset)).min(bar)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Closed mesh of the zero level set, extracted on a `res^3` lattice.
    pub fn mesh(&self, res: usize) -> TriangleMesh {
        let domain = Aabb::cube(0.5);
        let cell = domain.extent().x / (res - 1) as f64;
        // linear in distance near the surface so edge interpolation is exact
        // to first order
        let grid = ScalarGrid::from_fn(domain, [res; 3], |p| {
            (0.5 - self.signed_distance(p) / (8.0 * cell)).clamp(0.0, 1.0)
        });
        marching_cubes(&grid, 0.5).mesh
    }
}
