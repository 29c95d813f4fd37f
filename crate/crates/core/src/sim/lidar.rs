//! Beam-pattern model and scan generation.
//!
//! The sensor is gimballed: beam elevations are fixed relative to gravity
//! regardless of vehicle attitude, and the azimuth sweep rotates with the
//! vehicle yaw. Range noise is Gaussian along the beam, drawn from a seeded
//! stream in beam order so a scan is a pure function of
//! `(scene, lidar, pose, seed)`.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::RigidTransform;
use crate::sim::scene::{PrimitiveId, Scene};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid lidar model: {reason}")]
    InvalidLidar { reason: String },
    #[error("sensor pose is below the ground surface (clearance {clearance:.3} m)")]
    PoseBelowSurface { clearance: f64 },
    #[error("sensor pose is outside the terrain extent")]
    PoseOutsideTerrain,
}

/// Beam pattern and noise description of the simulated sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    /// Beam elevations in radians, strictly increasing.
    pub elevations: Vec<f64>,
    /// Azimuth step in radians; must divide 2*pi.
    pub azimuth_step: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Standard deviation of along-beam range noise, meters.
    pub range_noise_sigma: f64,
}

impl LidarModel {
    /// Uniformly spaced channels between two elevation limits (inclusive).
    pub fn uniform(
        channels: usize,
        elevation_min: f64,
        elevation_max: f64,
        azimuth_step: f64,
        min_range: f64,
        max_range: f64,
        range_noise_sigma: f64,
    ) -> Result<Self, SimError> {
        if channels < 1 {
            return Err(SimError::InvalidLidar {
                reason: "need at least one channel".into(),
            });
        }
        let spacing = if channels == 1 {
            0.0
        } else {
            (elevation_max - elevation_min) / (channels - 1) as f64
        };
        let model = Self {
            elevations: (0..channels)
                .map(|c| elevation_min + c as f64 * spacing)
                .collect(),
            azimuth_step,
            min_range,
            max_range,
            range_noise_sigma,
        };
        model.validate()?;
        Ok(model)
    }

    /// 64 channels over [-24.8, +2.0] degrees with a 0.2 degree azimuth
    /// step, matching the class of sensor used on common odometry benchmarks.
    pub fn full_scale() -> Self {
        Self::uniform(
            64,
            -24.8f64.to_radians(),
            2.0f64.to_radians(),
            0.2f64.to_radians(),
            1.0,
            120.0,
            0.02,
        )
        .expect("full-scale preset is valid")
    }

    /// Reduced 32-channel pattern for fast experiments and CI.
    pub fn desk_scale() -> Self {
        Self::uniform(
            32,
            -24.8f64.to_radians(),
            2.0f64.to_radians(),
            0.72f64.to_radians(),
            1.0,
            70.0,
            0.02,
        )
        .expect("desk-scale preset is valid")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |reason: String| Err(SimError::InvalidLidar { reason });
        if self.elevations.is_empty() {
            return fail("no channels".into());
        }
        if self.elevations.windows(2).any(|w| w[1] <= w[0]) {
            return fail("elevations must be strictly increasing".into());
        }
        let n = (std::f64::consts::TAU / self.azimuth_step).round();
        if !(self.azimuth_step > 0.0) || (n * self.azimuth_step - std::f64::consts::TAU).abs() > 1e-9
        {
            return fail(format!("azimuth step {} must divide 2*pi", self.azimuth_step));
        }
        if !(self.min_range >= 0.0) || !(self.max_range > self.min_range) {
            return fail("need 0 <= min_range < max_range".into());
        }
        if !(self.range_noise_sigma >= 0.0) {
            return fail("range noise sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn azimuth_steps(&self) -> usize {
        (std::f64::consts::TAU / self.azimuth_step).round() as usize
    }

    pub fn channels(&self) -> usize {
        self.elevations.len()
    }
}

/// Sensor pose: position plus yaw. The sensor never tilts (gimballed), so
/// roll and pitch are identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl SensorPose {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, yaw }
    }

    /// Sensor-to-world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        crate::geometry::rotation_from_euler(0.0, 0.0, self.yaw)
    }

    /// Transform (in the crate's `R*p - t` convention) mapping points
    /// expressed in `other`'s sensor frame into this pose's sensor frame.
    pub fn transform_from(&self, other: &SensorPose) -> RigidTransform {
        let r1t = self.rotation().transpose();
        RigidTransform {
            rotation: r1t * other.rotation(),
            translation: r1t * (self.position - other.position),
        }
    }
}

/// One noiseless beam return: unit direction in the sensor frame, clean
/// range, and the primitive that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamReturn {
    pub direction: Vector3<f64>,
    pub range: f64,
    pub source: PrimitiveId,
}

fn check_pose(scene: &Scene, pose: &SensorPose) -> Result<(), SimError> {
    match scene.ground_height(pose.position.x, pose.position.y) {
        Some(h) => {
            let clearance = pose.position.z - h;
            if clearance <= 0.0 {
                return Err(SimError::PoseBelowSurface { clearance });
            }
        }
        None => return Err(SimError::PoseOutsideTerrain),
    }
    Ok(())
}

/// Casts every beam of the pattern from `pose` and returns the noiseless
/// hits, ordered by channel then azimuth. Fully deterministic.
pub fn raycast_returns(
    scene: &Scene,
    lidar: &LidarModel,
    pose: &SensorPose,
) -> Result<Vec<BeamReturn>, SimError> {
    lidar.validate()?;
    check_pose(scene, pose)?;
    let az_steps = lidar.azimuth_steps();
    let rot = pose.rotation();
    let beams: Vec<(usize, usize)> = (0..lidar.channels())
        .flat_map(|c| (0..az_steps).map(move |a| (c, a)))
        .collect();
    let hits: Vec<Option<BeamReturn>> = beams
        .par_iter()
        .map(|&(c, a)| {
            let beta = lidar.elevations[c];
            let alpha = -std::f64::consts::PI + a as f64 * lidar.azimuth_step;
            let (sa, ca) = alpha.sin_cos();
            let (sb, cb) = beta.sin_cos();
            let dir_sensor = Vector3::new(ca * cb, sa * cb, sb);
            let dir_world = rot * dir_sensor;
            scene
                .nearest_hit(&pose.position, &dir_world, lidar.min_range, lidar.max_range)
                .map(|(range, source)| BeamReturn {
                    direction: dir_sensor,
                    range,
                    source,
                })
        })
        .collect();
    Ok(hits.into_iter().flatten().collect())
}

/// Applies seeded Gaussian range noise to noiseless returns, producing the
/// sensor-frame point cloud and per-point source labels.
pub fn scan_from_returns(
    returns: &[BeamReturn],
    sigma: f64,
    seed: u64,
) -> (PointCloud, Vec<PrimitiveId>) {
    let mut points = Vec::with_capacity(returns.len());
    let mut labels = Vec::with_capacity(returns.len());
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
        for ret in returns {
            let range = ret.range + normal.sample(&mut rng);
            points.push(ret.direction * range);
            labels.push(ret.source);
        }
    } else {
        for ret in returns {
            points.push(ret.direction * ret.range);
            labels.push(ret.source);
        }
    }
    (PointCloud::new(points), labels)
}

/// Full simulated sweep: ray casting plus seeded range noise.
pub fn raycast_scan(
    scene: &Scene,
    lidar: &LidarModel,
    pose: &SensorPose,
    seed: u64,
) -> Result<PointCloud, SimError> {
    let returns = raycast_returns(scene, lidar, pose)?;
    Ok(scan_from_returns(&returns, lidar.range_noise_sigma, seed).0)
}

/// Like [`raycast_scan`] but also returns per-point primitive labels.
pub fn raycast_scan_labeled(
    scene: &Scene,
    lidar: &LidarModel,
    pose: &SensorPose,
    seed: u64,
) -> Result<(PointCloud, Vec<PrimitiveId>), SimError> {
    let returns = raycast_returns(scene, lidar, pose)?;
    Ok(scan_from_returns(&returns, lidar.range_noise_sigma, seed))
}
