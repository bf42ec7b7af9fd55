use rand::Rng;

use super::{Point3, PointCloud, TriangleMesh};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Draws `n` points uniformly over the mesh surface: faces are picked with
/// probability proportional to their area, positions uniformly within each
/// face. Identical `(mesh, n, seed)` give bit-identical output.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = rng_from_seed(seed);
    sample_surface_with(mesh, n, &mut rng)
}

pub(crate) fn sample_surface_with<R: Rng>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<PointCloud> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        // first face whose cumulative area exceeds the target; zero-area faces
        // never satisfy the strict inequality before a positive one does
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let s = rng.gen::<f64>().sqrt();
        let r = rng.gen::<f64>();
        let p = a.coords * (1.0 - s) + b.coords * (s * (1.0 - r)) + c.coords * (s * r);
        points.push(Point3::from(p));
    }
    PointCloud::new(points)
}
