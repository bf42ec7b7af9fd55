//! Table-driven marching cubes with edge-welded vertices.
//!
//! Ambiguous configurations use the plain 256-case table without any
//! asymptotic decider, so saddle faces may occasionally disagree between
//! neighboring cells.

use std::collections::HashMap;

use log::warn;

use super::tables::{EDGE_TABLE, TRI_TABLE};
use super::ScalarGrid;
use crate::geometry::{Point3, TriangleMesh};

/// Amount subtracted from node values that sit exactly on the iso level.
const ISO_NUDGE: f64 = 1e-12;

/// Cube corner offsets; corners 0-3 on the lower z face, 4-7 above them.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cube edges as corner pairs, matching the lookup tables.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionStatus {
    Surface,
    /// No lattice edge straddles the iso level.
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub mesh: TriangleMesh,
    pub status: ExtractionStatus,
}

fn nudged(v: f64, iso: f64) -> f64 {
    if v == iso {
        iso - ISO_NUDGE
    } else {
        v
    }
}

/// Extracts the `iso` level set of `grid`.
///
/// Vertices are placed by linear interpolation along lattice edges and shared
/// between the cells that meet at an edge. Faces are wound so that their
/// normals point from values above `iso` towards values below it, i.e. out of
/// the occupied region.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Extraction {
    let [nx, ny, nz] = grid.resolution();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut welded: HashMap<usize, usize> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut nodes = [0usize; 8];
                let mut values = [0.0f64; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    nodes[c] = grid.flat_index(i + off[0], j + off[1], k + off[2]);
                    values[c] = nudged(grid.values()[nodes[c]], iso);
                    // the table marks corners below the level
                    if values[c] < iso {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for (e, &[c0, c1]) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    // orient each lattice edge from its lower node index so the
                    // shared vertex is computed identically by every cell
                    let (lo, hi) = if nodes[c0] < nodes[c1] { (c0, c1) } else { (c1, c0) };
                    let axis = (0..3).find(|&a| CORNERS[lo][a] != CORNERS[hi][a]).unwrap();
                    let key = nodes[lo] * 3 + axis;
                    edge_vertex[e] = *welded.entry(key).or_insert_with(|| {
                        let (vl, vh) = (values[lo], values[hi]);
                        let t = (iso - vl) / (vh - vl);
                        let pl = grid.position(i + CORNERS[lo][0], j + CORNERS[lo][1], k + CORNERS[lo][2]);
                        let ph = grid.position(i + CORNERS[hi][0], j + CORNERS[hi][1], k + CORNERS[hi][2]);
                        vertices.push(pl + (ph - pl) * t);
                        vertices.len() - 1
                    });
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let a = edge_vertex[tri[0] as usize];
                    let b = edge_vertex[tri[1] as usize];
                    let c = edge_vertex[tri[2] as usize];
                    faces.push([a, b, c]);
                }
            }
        }
    }

    let status = if faces.is_empty() {
        warn!("no iso-level crossing found; extracted mesh is empty");
        ExtractionStatus::Empty
    } else {
        ExtractionStatus::Surface
    };
    Extraction {
        mesh: TriangleMesh { vertices, faces },
        status,
    }
}
