//! Segment/triangle crossing counts and parity occupancy against a mesh.

use super::{Aabb, Point3, TriangleMesh, Vec3};
use crate::{Error, Result};

const LEAF_SIZE: usize = 4;
/// Barycentric margin below which a hit is treated as an edge/vertex hit.
const EDGE_EPS: f64 = 1e-10;
/// Magnitude of the sideways shift applied to a segment that grazes an edge.
const JITTER: f64 = 1e-9;
const MAX_JITTER_ATTEMPTS: usize = 8;

/// Fixed ray direction used for parity occupancy. Deliberately not aligned
/// with any axis or diagonal.
pub const OCCUPANCY_RAY: [f64; 3] = [0.5372996, 0.6924083, 0.4815167];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hit {
    Miss,
    Cross,
    Grazing,
}

fn segment_triangle(a: &Point3, dir: &Vec3, tri: &[Point3; 3]) -> Hit {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        // parallel; only a coplanar segment can touch it
        let n = e1.cross(&e2);
        let off = n.dot(&(a - tri[0]));
        return if off.abs() <= 1e-14 * n.norm() * (1.0 + (a - tri[0]).norm()) {
            Hit::Grazing
        } else {
            Hit::Miss
        };
    }
    let inv = 1.0 / det;
    let s = a - tri[0];
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let t = e2.dot(&q) * inv;
    // open segment: endpoints resting on the surface do not count
    if !(t > 0.0 && t < 1.0) {
        return Hit::Miss;
    }
    let w = 1.0 - u - v;
    if u < -EDGE_EPS || v < -EDGE_EPS || w < -EDGE_EPS {
        return Hit::Miss;
    }
    if u <= EDGE_EPS || v <= EDGE_EPS || w <= EDGE_EPS {
        return Hit::Grazing;
    }
    Hit::Cross
}

fn canonical(a: Point3, b: Point3) -> (Point3, Point3) {
    let key = |p: &Point3| [p.x, p.y, p.z];
    let (ka, kb) = (key(&a), key(&b));
    let ord = ka
        .iter()
        .zip(kb.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal);
    if ord.is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

/// Orthonormal pair spanning the plane normal to `d`.
fn normal_plane(d: &Vec3) -> (Vec3, Vec3) {
    let d = d.normalize();
    let helper = if d.x.abs() < 0.6 { Vec3::x() } else { Vec3::y() };
    let n1 = d.cross(&helper).normalize();
    let n2 = d.cross(&n1);
    (n1, n2)
}

/// Counts crossings of the open segment `(a, b)` by calling `visit` on each
/// candidate triangle. Grazing hits trigger a deterministic sideways shift of
/// the whole segment and a recount.
fn count_robust<F>(a: &Point3, b: &Point3, mut visit: F) -> Result<usize>
where
    F: FnMut(&Point3, &Point3, &mut dyn FnMut(&[Point3; 3]) -> bool),
{
    if a == b {
        return Err(Error::ZeroLengthSegment);
    }
    let (a, b) = canonical(*a, *b);
    let dir = b - a;
    let (n1, n2) = normal_plane(&dir);
    for attempt in 0..=MAX_JITTER_ATTEMPTS {
        let shift = if attempt == 0 {
            Vec3::zeros()
        } else {
            let angle = attempt as f64 * 2.399963229728653; // golden angle
            (n1 * angle.cos() + n2 * angle.sin()) * (JITTER * attempt as f64)
        };
        let (sa, sb) = (a + shift, b + shift);
        let sdir = sb - sa;
        let mut count = 0usize;
        let mut grazing = false;
        visit(&sa, &sb, &mut |tri| {
            match segment_triangle(&sa, &sdir, tri) {
                Hit::Miss => {}
                Hit::Cross => count += 1,
                Hit::Grazing => grazing = true,
            }
            !grazing
        });
        if !grazing {
            return Ok(count);
        }
    }
    // persistent grazing is practically impossible for finite meshes; fall
    // back to the unshifted strict count
    let mut count = 0usize;
    visit(&a, &b, &mut |tri| {
        if segment_triangle(&a, &dir, tri) == Hit::Cross {
            count += 1;
        }
        true
    });
    Ok(count)
}

/// Number of mesh triangles crossed by the open segment `(a, b)`, by a linear
/// pass over all faces.
pub fn segment_crossings(mesh: &TriangleMesh, a: &Point3, b: &Point3) -> Result<usize> {
    count_robust(a, b, |_, _, f| {
        for i in 0..mesh.faces.len() {
            if !f(&mesh.triangle(i)) {
                return;
            }
        }
    })
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

/// Bounding-volume hierarchy over a mesh for fast crossing and occupancy
/// queries. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CrossingIndex {
    triangles: Vec<[Point3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    bounds: Option<Aabb>,
}

fn tri_bounds(t: &[Point3; 3]) -> Aabb {
    Aabb::from_points(t.iter()).unwrap()
}

fn merge(a: &Aabb, b: &Aabb) -> Aabb {
    Aabb {
        min: Point3::new(a.min.x.min(b.min.x), a.min.y.min(b.min.y), a.min.z.min(b.min.z)),
        max: Point3::new(a.max.x.max(b.max.x), a.max.y.max(b.max.y), a.max.z.max(b.max.z)),
    }
}

/// Slab test for the segment `a + t * dir`, `t` in `[0, 1]`, against a box
/// padded by `pad`.
fn segment_hits_box(a: &Point3, dir: &Vec3, b: &Aabb, pad: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let lo = b.min[k] - pad;
        let hi = b.max[k] + pad;
        if dir[k] == 0.0 {
            if a[k] < lo || a[k] > hi {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let (mut ta, mut tb) = ((lo - a[k]) * inv, (hi - a[k]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

impl CrossingIndex {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[Point3; 3]> = (0..mesh.faces.len()).map(|i| mesh.triangle(i)).collect();
        let mut index = Self {
            order: (0..triangles.len()).collect(),
            nodes: Vec::new(),
            bounds: mesh.bounds(),
            triangles,
        };
        if !index.triangles.is_empty() {
            let centroids: Vec<Point3> = index
                .triangles
                .iter()
                .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
                .collect();
            index.build(0, index.triangles.len(), &centroids);
        }
        index
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Point3]) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .map(|&i| tri_bounds(&self.triangles[i]))
            .reduce(|a, b| merge(&a, &b))
            .unwrap();
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let cb = Aabb::from_points(self.order[start..end].iter().map(|&i| &centroids[i])).unwrap();
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn visit_segment(&self, a: &Point3, b: &Point3, f: &mut dyn FnMut(&[Point3; 3]) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let dir = b - a;
        // pad boxes so that jittered and grazing segments are never culled
        let pad = 1e-7;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !segment_hits_box(a, &dir, &node.bounds, pad) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if !f(&self.triangles[i]) {
                            return;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Number of triangles crossed by the open segment `(a, b)`.
    ///
    /// Symmetric in `a` and `b`; grazing edge or vertex hits are resolved by a
    /// tiny deterministic sideways shift of the segment.
    pub fn segment_crossings(&self, a: &Point3, b: &Point3) -> Result<usize> {
        count_robust(a, b, |sa, sb, f| self.visit_segment(sa, sb, f))
    }

    /// Ground-truth occupancy by ray parity: 1 inside a closed mesh, 0 outside.
    pub fn occupancy(&self, p: &Point3) -> u8 {
        let Some(bounds) = self.bounds else {
            return 0;
        };
        let dir = Vec3::from(OCCUPANCY_RAY).normalize();
        let reach = bounds.diagonal() + (p - bounds.center()).norm() + 1.0;
        let far = p + dir * reach;
        match self.segment_crossings(p, &far) {
            Ok(n) => (n % 2) as u8,
            Err(_) => 0,
        }
    }
}

/// Ray-parity occupancy of `p` against `mesh` (builds a throwaway index).
pub fn mesh_occupancy(mesh: &TriangleMesh, p: &Point3) -> u8 {
    CrossingIndex::new(mesh).occupancy(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn center_to_outside_crosses_once() {
        let sphere = shapes::icosphere(1.0, 3);
        let a = Point3::origin();
        let b = Point3::new(2.0, 0.0, 0.0);
        assert_eq!(segment_crossings(&sphere, &a, &b).unwrap(), 1);
        assert_eq!(CrossingIndex::new(&sphere).segment_crossings(&a, &b).unwrap(), 1);
    }

    #[test]
    fn interior_segment_has_no_crossing() {
        let sphere = shapes::icosphere(1.0, 3);
        let idx = CrossingIndex::new(&sphere);
        let n = idx
            .segment_crossings(&Point3::new(0.0, 0.0, 0.1), &Point3::new(0.0, 0.0, -0.1))
            .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn zero_length_is_error() {
        let sphere = shapes::icosphere(1.0, 1);
        let p = Point3::new(0.3, 0.0, 0.0);
        assert!(matches!(segment_crossings(&sphere, &p, &p), Err(Error::ZeroLengthSegment)));
    }

    #[test]
    fn shared_edge_hit_counted_once() {
        // unit square split along its diagonal; aim at the shared edge
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(-1.0, -1.0, 0.0),
                Point3::new(1.0, -1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(-1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let idx = CrossingIndex::new(&mesh);
        let up = Vec3::new(0.0, 0.0, 1.0);
        for q in [Point3::origin(), Point3::new(0.5, 0.5, 0.0), Point3::new(-0.25, -0.25, 0.0)] {
            assert_eq!(idx.segment_crossings(&(q + up), &(q - up)).unwrap(), 1);
            assert_eq!(idx.segment_crossings(&(q - up), &(q + up)).unwrap(), 1);
            assert_eq!(segment_crossings(&mesh, &(q + up), &(q - up)).unwrap(), 1);
        }
        // outer corner: either side of it is fine, but both orders must agree
        let c = Point3::new(1.0, 1.0, 0.0);
        assert_eq!(
            idx.segment_crossings(&(c + up), &(c - up)).unwrap(),
            idx.segment_crossings(&(c - up), &(c + up)).unwrap()
        );
    }

    #[test]
    fn sphere_occupancy() {
        let sphere = shapes::icosphere(0.4, 3);
        assert_eq!(mesh_occupancy(&sphere, &Point3::origin()), 1);
        assert_eq!(mesh_occupancy(&sphere, &Point3::new(1.0, 1.0, 1.0)), 0);
    }
}
