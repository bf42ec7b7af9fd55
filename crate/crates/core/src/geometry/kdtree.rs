use super::Point3;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// Result of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Point3,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced kd-tree over a fixed point set.
///
/// Queries return exactly what an exhaustive scan would, with ties on
/// distance resolved in favor of the lowest point index.
#[derive(Debug, Clone)]
pub struct NearestNeighborIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Best {
    d2: f64,
    index: usize,
}

impl Best {
    fn offer(&mut self, d2: f64, index: usize) {
        if d2 < self.d2 || (d2 == self.d2 && index < self.index) {
            self.d2 = d2;
            self.index = index;
        }
    }
}

#[inline]
fn dist2(a: &Point3, b: &Point3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

impl NearestNeighborIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointCloud);
        }
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the widest axis at the median
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Nearest point to `query`, coincident points included.
    pub fn nearest(&self, query: &Point3) -> Neighbor {
        let mut best = Best { d2: f64::INFINITY, index: usize::MAX };
        self.search(0, query, None, false, &mut best);
        self.neighbor(best)
    }

    /// Nearest point distinct from `query`: skips `self_id` and any point
    /// coincident with the query.
    pub fn nearest_excluding(&self, query: &Point3, self_id: Option<usize>) -> Result<Neighbor> {
        let mut best = Best { d2: f64::INFINITY, index: usize::MAX };
        self.search(0, query, self_id, true, &mut best);
        if best.index == usize::MAX {
            return Err(Error::TooFewPoints(self.points.len()));
        }
        Ok(self.neighbor(best))
    }

    fn neighbor(&self, best: Best) -> Neighbor {
        Neighbor {
            index: best.index,
            point: self.points[best.index],
            distance: best.d2.sqrt(),
        }
    }

    fn search(&self, node: usize, q: &Point3, skip: Option<usize>, distinct: bool, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let d2 = dist2(q, &self.points[i]);
                    if distinct && d2 == 0.0 {
                        continue;
                    }
                    best.offer(d2, i);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, distinct, best);
                // equal distances must still be visited for the tie rule
                if diff * diff <= best.d2 {
                    self.search(far, q, skip, distinct, best);
                }
            }
        }
    }
}
