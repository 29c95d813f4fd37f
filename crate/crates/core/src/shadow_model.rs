//! Closed-form model of shadow-edge motion and the resulting voxel-mean bias.
//!
//! When the sensor moves past an occluder, the edge of the occluder's shadow
//! sweeps across the surfaces behind it. By similar triangles the edge moves
//! faster than the sensor by the ratio of occluder-to-surface distance over
//! sensor-to-occluder distance, and a voxel straddling the edge sees its
//! point mean shift by half the edge motion (uniform-density approximation).
//!
//! These formulas are exposed purely as an oracle for the validation suite;
//! the matcher never consults them. The model assumes the occluder radius is
//! small compared to the sensor-to-occluder distance and that the edge stays
//! inside the voxel across the motion.

/// Geometry of one sensor-occluder-voxel configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowScenario {
    /// Distance from the sensor to the occluder, meters (> 0).
    pub lidar_to_occluder: f64,
    /// Distance from the occluder to the voxel of interest, meters (>= 0).
    pub occluder_to_voxel: f64,
    /// Sensor displacement, meters, measured parallel to the shadow-edge
    /// shift.
    pub displacement: f64,
}

/// Distance the shadow edge moves for a given sensor displacement.
pub fn shadow_edge_shift(s: &ShadowScenario) -> f64 {
    (s.occluder_to_voxel / s.lidar_to_occluder) * s.displacement
}

/// Apparent shift of the point mean in a voxel straddling the shadow edge:
/// half the edge shift.
pub fn apparent_mean_shift(s: &ShadowScenario) -> f64 {
    0.5 * shadow_edge_shift(s)
}
