//! Ground-plane removal baseline.
//!
//! The most common shadow heuristic: delete every point near the ground
//! surface before matching. The clearance function comes either from the
//! simulator's ground truth or from a plane fitted to the lowest points of
//! the cloud itself.

use nalgebra::{Matrix3, Vector3};

use crate::cloud::PointCloud;

/// Removes all points within `height_tolerance` of the ground surface.
///
/// `clearance` must return the signed height of a cloud-frame point above
/// the ground; a point is kept iff its clearance exceeds the tolerance
/// (points below the surface are removed as well).
pub fn remove_ground_plane(
    cloud: &PointCloud,
    height_tolerance: f64,
    clearance: impl Fn(&Vector3<f64>) -> f64,
) -> PointCloud {
    cloud
        .iter()
        .filter(|p| clearance(p) > height_tolerance)
        .copied()
        .collect()
}

/// Plane `z = a*x + b*y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FittedPlane {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    pub fn clearance(&self, p: &Vector3<f64>) -> f64 {
        p.z - self.height(p.x, p.y)
    }
}

/// Least-squares plane through the lowest decile of the cloud (by z), the
/// estimate used when no ground-truth surface is available.
pub fn fit_lowest_decile_plane(cloud: &PointCloud) -> Option<FittedPlane> {
    if cloud.len() < 10 {
        return None;
    }
    let mut zs: Vec<f64> = cloud.iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = zs[cloud.len() / 10];
    let low: Vec<&Vector3<f64>> = cloud.iter().filter(|p| p.z <= cutoff).collect();
    if low.len() < 3 {
        return None;
    }
    // Normal equations for z = a*x + b*y + c.
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in low {
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atb += row * p.z;
    }
    let sol = ata.lu().solve(&atb)?;
    Some(FittedPlane {
        a: sol[0],
        b: sol[1],
        c: sol[2],
    })
}
