//! Sensor trajectories over a scene.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sim::lidar::{SensorPose, SimError};
use crate::sim::scene::Scene;

/// Constant-rate trajectory parameters. With `yaw_rate` zero this is the
/// straight roadway profile; the offroad profile adds a steady yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    /// Number of frame pairs; the trajectory holds one more pose.
    pub locations: usize,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub yaw_rate_deg_per_s: f64,
    /// Sensor height above the local ground surface.
    pub sensor_height_m: f64,
    pub start_x_m: f64,
    pub start_y_m: f64,
    pub start_heading_deg: f64,
}

impl TrajectoryParams {
    /// Straight lane traversal: 5 m/s at 10 Hz (0.5 m per frame pair).
    pub fn roadway(locations: usize) -> Self {
        Self {
            locations,
            speed_mps: 5.0,
            frame_rate_hz: 10.0,
            yaw_rate_deg_per_s: 0.0,
            sensor_height_m: 1.8,
            start_x_m: 0.0,
            start_y_m: 0.0,
            start_heading_deg: 0.0,
        }
    }

    /// Forward motion with a steady turn: 5 m/s and 30 deg/s at 10 Hz
    /// (0.5 m and 3 degrees of yaw per frame pair).
    pub fn offroad(locations: usize) -> Self {
        Self {
            locations,
            speed_mps: 5.0,
            frame_rate_hz: 10.0,
            yaw_rate_deg_per_s: 30.0,
            sensor_height_m: 2.0,
            start_x_m: 0.0,
            start_y_m: 0.0,
            start_heading_deg: 0.0,
        }
    }
}

/// Sequence of sensor poses at a fixed frame rate. Timestamps are implicit:
/// pose `k` is at `k / rate_hz` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rate_hz: f64,
    pub poses: Vec<SensorPose>,
}

impl Trajectory {
    pub fn frame_pairs(&self) -> usize {
        self.poses.len().saturating_sub(1)
    }
}

/// Generates `locations + 1` poses along the configured path, with the
/// sensor riding a fixed height above the local ground surface.
///
/// The first pose sits at the configured start position. Errors if any pose
/// would leave the terrain extent.
pub fn generate_trajectory(scene: &Scene, params: &TrajectoryParams) -> Result<Trajectory, SimError> {
    let dt = 1.0 / params.frame_rate_hz;
    let step = params.speed_mps * dt;
    let yaw_step = (params.yaw_rate_deg_per_s * dt).to_radians();
    let mut poses = Vec::with_capacity(params.locations + 1);
    let mut x = params.start_x_m;
    let mut y = params.start_y_m;
    let mut yaw = params.start_heading_deg.to_radians();
    for k in 0..=params.locations {
        let ground = scene
            .ground_height(x, y)
            .ok_or(SimError::PoseOutsideTerrain)?;
        poses.push(SensorPose::new(
            Vector3::new(x, y, ground + params.sensor_height_m),
            yaw,
        ));
        if k < params.locations {
            x += step * yaw.cos();
            y += step * yaw.sin();
            yaw += yaw_step;
        }
    }
    Ok(Trajectory {
        rate_hz: params.frame_rate_hz,
        poses,
    })
}
