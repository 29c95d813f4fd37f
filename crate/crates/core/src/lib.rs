//! Shadow-aware lidar scan matching on a spherical voxel grid.
//!
//! Lidar range shadows (regions occluded by a nearer object) move when the
//! sensor moves, which biases voxel-based scan matching. This crate mitigates
//! that error source by binning each scan into azimuth/elevation wedges,
//! detecting radial jumps between surfaces, and keeping only the nearest
//! point cluster per wedge. The truncated wedges double as the voxel grid for
//! an iterative weighted least-squares matcher that also predicts its own
//! error covariance.
//!
//! The crate ships everything needed to evaluate the approach end to end:
//!
//! - [`geometry`]: coordinate conversions and the rigid-transform convention
//!   shared by all modules.
//! - [`shadow_model`]: closed-form predictor of shadow-edge motion, used as an
//!   oracle by the validation tests.
//! - [`spherical_grid`]: wedge binning, adaptive radial bounds, and
//!   shadow-filtered voxelization.
//! - [`scan_match`]: voxel statistics, the pose solver with predicted
//!   covariance, and the Cartesian-grid / ground-removal baselines.
//! - [`sim`]: analytic ray-casting simulator (planes, walls, cylinders,
//!   heightfield terrain) with a configurable beam pattern and seeded noise.
//! - [`harness`]: Monte Carlo experiment runner, actual-vs-predicted error
//!   statistics, and report generation.

pub mod cloud;
pub mod geometry;
pub mod harness;
pub mod scan_match;
pub mod shadow_model;
pub mod sim;
pub mod spherical_grid;

pub use cloud::PointCloud;
pub use geometry::{RigidTransform, SphericalPoint};
pub use scan_match::{MatchConfig, SolutionReport, VoxelStats};
pub use spherical_grid::{ShadowFilteredGrid, WedgeGridConfig};
