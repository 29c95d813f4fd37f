//! Voxel-distribution scan matching with analytic accuracy prediction.
//!
//! The matcher aligns per-voxel point distributions between a primary and a
//! secondary scan. Each iteration transforms the secondary cloud by the
//! current estimate, re-bins it into the fixed primary voxel grid, forms one
//! mean-difference residual per usable voxel weighted by the inverse of the
//! combined mean covariance, and takes a Gauss-Newton step. The inverse
//! Gauss-Newton normal matrix doubles as the solver's prediction of its own
//! error covariance.
//!
//! Two baseline preparations are provided for comparison: a plain cubic
//! Cartesian grid and ground-plane removal.

mod ground;
mod partition;
mod solver;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::{RigidTransform, StateVector};

pub use ground::{fit_lowest_decile_plane, remove_ground_plane, FittedPlane};
pub use partition::{
    anchor_bisecting_planes, cartesian_grid_prepare, CartesianGrid, PreparedCartesian,
    VoxelPartition,
};
pub use solver::match_scans;
#[doc(hidden)]
pub use solver::introspect;

/// 6x6 matrix over the state `[x, y, z, phi, theta, psi]`.
pub type StateMatrix = SMatrix<f64, 6, 6>;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("only {available} usable voxels (need at least 6)")]
    InsufficientVoxels { available: usize },
    #[error("normal matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("solution diverged (translation norm {translation_norm:.3} m)")]
    Diverged { translation_norm: f64 },
    #[error("initial transform is invalid: {0}")]
    BadInit(#[from] crate::geometry::GeometryError),
    #[error("voxel statistics need at least 2 points (got {count})")]
    InsufficientPoints { count: usize },
    #[error("invalid match config: {reason}")]
    BadConfig { reason: String },
}

/// First and second moments of the points in one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelStats {
    pub count: usize,
    pub mean: Vector3<f64>,
    /// Unbiased sample covariance, symmetric positive semidefinite.
    pub covariance: Matrix3<f64>,
}

impl VoxelStats {
    /// Mean and unbiased covariance of a point set (two-pass, so the
    /// covariance is accurate even for far-away voxels).
    pub fn from_points<'a, I>(points: I) -> Result<Self, MatchError>
    where
        I: Iterator<Item = &'a Vector3<f64>> + Clone,
    {
        let count = points.clone().count();
        if count < 2 {
            return Err(MatchError::InsufficientPoints { count });
        }
        let mut mean = Vector3::zeros();
        for p in points.clone() {
            mean += p;
        }
        mean /= count as f64;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - mean;
            cov += d * d.transpose();
        }
        cov /= (count - 1) as f64;
        cov = 0.5 * (cov + cov.transpose());
        Ok(Self {
            count,
            mean,
            covariance: cov,
        })
    }

    /// Stats of the cloud points selected by `indices`.
    pub fn from_indexed(cloud: &PointCloud, indices: &[u32]) -> Result<Self, MatchError> {
        Self::from_points(indices.iter().map(|&k| &cloud.points[k as usize]))
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the step norm (meters and radians mixed).
    pub step_tolerance: f64,
    /// A voxel participates only with at least this many points from each
    /// scan (and never fewer than 2).
    pub min_points_per_voxel: usize,
    /// Translation norm beyond which the solve is declared divergent.
    pub divergence_radius: f64,
    /// Isotropic floor added to each voxel's mean covariance before
    /// inversion, m^2. Keeps weights finite for degenerate (e.g. noiseless
    /// planar) voxels.
    pub covariance_floor: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-5,
            min_points_per_voxel: 5,
            divergence_radius: 5.0,
            covariance_floor: 1e-6,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let fail = |reason: &str| {
            Err(MatchError::BadConfig {
                reason: reason.into(),
            })
        };
        if self.max_iterations == 0 {
            return fail("max_iterations must be positive");
        }
        if !(self.step_tolerance > 0.0) {
            return fail("step_tolerance must be positive");
        }
        if self.min_points_per_voxel == 0 {
            return fail("min_points_per_voxel must be positive");
        }
        if !(self.divergence_radius > 0.0) {
            return fail("divergence_radius must be positive");
        }
        if !(self.covariance_floor > 0.0) {
            return fail("covariance_floor must be positive");
        }
        Ok(())
    }
}

/// Result of a pose solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionReport {
    pub estimate: RigidTransform,
    /// `[x, y, z, phi, theta, psi]`.
    pub state: StateVector,
    /// Inverse Gauss-Newton normal matrix at the final iterate; symmetric
    /// positive definite on converged solves.
    pub predicted_covariance: StateMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub voxels_used: usize,
}

impl SolutionReport {
    /// Element-wise square root of the predicted covariance diagonal.
    /// Meaningful on converged reports.
    pub fn predicted_sigma(&self) -> SVector<f64, 6> {
        self.predicted_covariance.diagonal().map(f64::sqrt)
    }

    /// Serializable summary record (state, per-axis sigma, diagnostics).
    pub fn to_record(&self) -> ReportRecord {
        let sigma = self.predicted_sigma();
        ReportRecord {
            state: self.state.into(),
            predicted_sigma: sigma.into(),
            iterations: self.iterations,
            converged: self.converged,
            voxels_used: self.voxels_used,
        }
    }
}

impl std::fmt::Display for SolutionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.predicted_sigma();
        writeln!(
            f,
            "state     x {:+.6} m  y {:+.6} m  z {:+.6} m  phi {:+.6} rad  theta {:+.6} rad  psi {:+.6} rad",
            self.state[0], self.state[1], self.state[2], self.state[3], self.state[4], self.state[5]
        )?;
        writeln!(
            f,
            "sigma     x {:.6} m  y {:.6} m  z {:.6} m  phi {:.6} rad  theta {:.6} rad  psi {:.6} rad",
            s[0], s[1], s[2], s[3], s[4], s[5]
        )?;
        write!(
            f,
            "converged {}  iterations {}  voxels_used {}",
            self.converged, self.iterations, self.voxels_used
        )
    }
}

/// Flat, serializable form of a [`SolutionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub state: [f64; 6],
    pub predicted_sigma: [f64; 6],
    pub iterations: usize,
    pub converged: bool,
    pub voxels_used: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_two_points() {
        let points = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let s = VoxelStats::from_points(points.iter()).unwrap();
        assert_eq!(s.count, 2);
        assert_eq!(s.mean, Vector3::new(1.0, 0.0, 0.0));
        // Unbiased: ((1)^2 + (1)^2) / (2 - 1) = 2 on the x axis.
        assert_eq!(s.covariance[(0, 0)], 2.0);
        assert_eq!(s.covariance[(1, 1)], 0.0);
        assert_eq!(s.covariance[(2, 2)], 0.0);
    }

    #[test]
    fn stats_of_identical_points_have_zero_covariance() {
        let p = Vector3::new(1.0, -2.0, 3.0);
        let points = vec![p; 7];
        let s = VoxelStats::from_points(points.iter()).unwrap();
        assert_eq!(s.mean, p);
        assert_eq!(s.covariance, Matrix3::zeros());
    }

    #[test]
    fn stats_need_two_points() {
        let points = [Vector3::new(1.0, 2.0, 3.0)];
        assert!(matches!(
            VoxelStats::from_points(points.iter()),
            Err(MatchError::InsufficientPoints { count: 1 })
        ));
    }

    #[test]
    fn stats_recover_generating_covariance() {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5EED_0040);
        let normal = rand_distr::Normal::new(0.0, 0.2).unwrap();
        let points: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| {
                Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            })
            .collect();
        let s = VoxelStats::from_points(points.iter()).unwrap();
        for axis in 0..3 {
            let v = s.covariance[(axis, axis)];
            assert!(
                (v - 0.04).abs() / 0.04 < 0.05,
                "axis {axis} variance {v} off by more than 5%"
            );
        }
    }

    #[test]
    fn predicted_sigma_is_sqrt_of_diagonal() {
        let mut report = SolutionReport {
            estimate: RigidTransform::identity(),
            state: StateVector::zeros(),
            predicted_covariance: StateMatrix::identity() * 1e-6,
            iterations: 1,
            converged: true,
            voxels_used: 10,
        };
        let sigma = report.predicted_sigma();
        for k in 0..6 {
            assert!((sigma[k] - 1e-3).abs() < 1e-15);
        }
        // Consistent under a symmetric permutation of the state ordering.
        let perm = [5usize, 4, 3, 2, 1, 0];
        let mut permuted = StateMatrix::zeros();
        for a in 0..6 {
            for b in 0..6 {
                permuted[(a, b)] = report.predicted_covariance[(perm[a], perm[b])];
            }
        }
        report.predicted_covariance = permuted;
        let sigma_permuted = report.predicted_sigma();
        for k in 0..6 {
            assert_eq!(sigma[perm[k]], sigma_permuted[k]);
        }
    }
}
