//! Analytic ray-casting lidar simulator.
//!
//! Pure-geometry scenes (planes, walls, cylinders, sinusoidal terrain) are
//! sampled by a configurable beam pattern with seeded range noise. Everything
//! is deterministic: the same `(scene, lidar, pose, seed)` always yields the
//! same point cloud, bit for bit, independent of thread count.

mod lidar;
mod scene;
mod trajectory;

pub use lidar::{
    raycast_returns, raycast_scan, raycast_scan_labeled, scan_from_returns, BeamReturn,
    LidarModel, SensorPose, SimError,
};
pub use scene::{
    build_offroad_scene, build_roadway_scene, Cylinder, Ground, Heightfield, OffroadParams,
    PrimitiveId, RoadwayParams, Scene, SineWave, Wall,
};
pub use trajectory::{generate_trajectory, Trajectory, TrajectoryParams};
