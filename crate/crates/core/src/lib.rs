//! Self-supervised occupancy reconstruction from sparse point clouds.
//!
//! Needles (pairs of 3D points) are dropped around an input cloud: short
//! segments centered on the input points are expected to cross the surface,
//! segments between free-space samples and their nearest neighbors are
//! expected not to. A coordinate network is fitted so that the probability of
//! the two endpoints sharing the same occupancy label matches those targets,
//! and the resulting field is meshed with marching cubes.
//!
//! Module map:
//! - [`geometry`]: points, meshes, nearest-neighbor search, surface sampling,
//!   ground-truth crossing and occupancy queries, file formats.
//! - [`needles`]: opposite-side and same-side needle construction and auditing.
//! - [`loss`]: the needle cross-entropy and its analytic gradient.
//! - [`model`]: the occupancy MLP, Adam and the training loop.
//! - [`field`]: dense grid evaluation and marching cubes.
//! - [`metrics`]: Chamfer distances, percentile Chamfer and volumetric IoU.
//! - [`cli`]: the `needrop` command-line front end.

pub mod cli;
mod error;
pub mod field;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod needles;
pub mod rng;
pub mod shapes;

pub use error::{Error, Result};
pub use geometry::{Aabb, Point3, PointCloud, TriangleMesh, Vec3};
