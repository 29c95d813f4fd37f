//! Iterative weighted least-squares pose solver.

use nalgebra::{Cholesky, Matrix3, SMatrix, Vector3};

use crate::cloud::PointCloud;
use crate::geometry::{rotation_derivatives, RigidTransform, StateVector};
use crate::scan_match::{
    MatchConfig, MatchError, SolutionReport, StateMatrix, VoxelPartition, VoxelStats,
};

/// Voxels whose combined mean covariance is worse conditioned than this are
/// dropped from the iteration (typically degenerate distributions).
const WEIGHT_CONDITION_LIMIT: f64 = 1e8;

/// Normal matrices worse conditioned than this abort the solve.
const HESSIAN_CONDITION_LIMIT: f64 = 1e12;

struct Linearization {
    h: StateMatrix,
    g: StateVector,
    voxels_used: usize,
}

/// Per-voxel residual Jacobian with respect to the state, at fixed voxel
/// membership. The residual is `y = mu_primary - (R(angles) * p_bar - t)`,
/// so the translation block is the identity and each angle column is
/// `-dR/dangle * p_bar`.
fn residual_jacobian(state: &StateVector, p_bar: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
    let dr = rotation_derivatives(state[3], state[4], state[5]);
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    for (k, d) in dr.iter().enumerate() {
        j.set_column(3 + k, &(-(d * p_bar)));
    }
    j
}

/// Residual for one voxel at fixed membership: the primary mean minus the
/// transformed secondary mean.
fn residual(state: &StateVector, mu_p: &Vector3<f64>, p_bar: &Vector3<f64>) -> Vector3<f64> {
    let t = RigidTransform::from_state(state);
    mu_p - t.apply(p_bar)
}

fn condition_number_sym3(m: &Matrix3<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn condition_number_sym6(m: &StateMatrix) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn linearize<P: VoxelPartition>(
    partition: &P,
    primary: &[Option<VoxelStats>],
    secondary: &PointCloud,
    state: &StateVector,
    cfg: &MatchConfig,
) -> Linearization {
    let transform = RigidTransform::from_state(state);
    let rot = transform.rotation;

    // Re-bin the transformed secondary cloud into the fixed primary grid.
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); partition.voxel_count()];
    for (k, p) in secondary.iter().enumerate() {
        let q = transform.apply(p);
        if let Some(i) = partition.assign(&q) {
            if primary[i].is_some() {
                members[i].push(k as u32);
            }
        }
    }

    let min_points = cfg.min_points_per_voxel.max(2);
    let mut h = StateMatrix::zeros();
    let mut g = StateVector::zeros();
    let mut voxels_used = 0usize;
    for (i, member) in members.iter().enumerate() {
        let Some(stats_p) = primary[i] else { continue };
        if member.len() < min_points {
            continue;
        }
        let Ok(stats_s) = VoxelStats::from_indexed(secondary, member) else {
            continue;
        };
        // Mean and covariance of the transformed secondary points, from the
        // untransformed moments: the mean maps through the transform and the
        // covariance only rotates.
        let p_bar = stats_s.mean;
        let mu_s = rot * p_bar - transform.translation;
        let cov_s = rot * stats_s.covariance * rot.transpose();

        // Covariance of the mean difference; the floor keeps degenerate
        // (planar, noise-free) voxels invertible.
        let mut w_inv = stats_p.covariance / stats_p.count as f64
            + cov_s / stats_s.count as f64
            + Matrix3::identity() * cfg.covariance_floor;
        w_inv = 0.5 * (w_inv + w_inv.transpose());
        if condition_number_sym3(&w_inv) > WEIGHT_CONDITION_LIMIT {
            continue;
        }
        let Some(w) = Cholesky::new(w_inv).map(|c| c.inverse()) else {
            continue;
        };

        let y = stats_p.mean - mu_s;
        let j = residual_jacobian(state, &p_bar);
        let jt_w = j.transpose() * w;
        h += jt_w * j;
        g += jt_w * y;
        voxels_used += 1;
    }
    Linearization { h, g, voxels_used }
}

/// Registers a secondary scan to a primary voxel grid.
///
/// Each iteration transforms the secondary points by the current estimate,
/// re-bins them into the fixed primary partition, forms per-voxel residuals
/// `y_i = mu_primary,i - mu_secondary,i` weighted by
/// `W_i = (cov_p/n_p + cov_s/n_s)^-1`, and applies the Gauss-Newton step.
/// Iteration stops when the step norm drops below `cfg.step_tolerance`
/// (converged) or after `cfg.max_iterations` (not converged). The returned
/// predicted covariance is the inverse normal matrix at the final iterate.
///
/// Errors on divergence (translation beyond `cfg.divergence_radius`), on a
/// rank-deficient normal matrix, and when fewer than 6 voxels hold enough
/// points from both scans.
pub fn match_scans<P: VoxelPartition>(
    partition: &P,
    primary: &[Option<VoxelStats>],
    secondary: &PointCloud,
    init: &RigidTransform,
    cfg: &MatchConfig,
) -> Result<SolutionReport, MatchError> {
    cfg.validate()?;
    assert_eq!(
        primary.len(),
        partition.voxel_count(),
        "primary stats must align with the partition"
    );
    let mut state = init.to_state()?;
    let mut converged = false;
    let mut iterations = 0;
    let mut final_lin: Option<Linearization> = None;

    for iter in 1..=cfg.max_iterations {
        iterations = iter;
        let lin = linearize(partition, primary, secondary, &state, cfg);
        if lin.voxels_used < 6 {
            return Err(MatchError::InsufficientVoxels {
                available: lin.voxels_used,
            });
        }
        let condition = condition_number_sym6(&lin.h);
        if condition > HESSIAN_CONDITION_LIMIT {
            return Err(MatchError::RankDeficient { condition });
        }
        let chol = Cholesky::new(lin.h).ok_or(MatchError::RankDeficient { condition })?;
        // Gauss-Newton: minimizing sum (y + J d)' W (y + J d) gives
        // d = -(J'WJ)^-1 J'W y.
        let delta = -chol.solve(&lin.g);
        if delta.norm() < cfg.step_tolerance {
            // Converged: the last linearization is evaluated exactly at the
            // reported state.
            converged = true;
            final_lin = Some(lin);
            break;
        }
        state += delta;
        let translation_norm =
            (state[0] * state[0] + state[1] * state[1] + state[2] * state[2]).sqrt();
        if translation_norm > cfg.divergence_radius {
            return Err(MatchError::Diverged { translation_norm });
        }
        final_lin = Some(lin);
    }

    let lin = match (converged, final_lin) {
        (true, Some(lin)) => lin,
        // Not converged: re-linearize at the final state so the report is
        // self-consistent.
        _ => linearize(partition, primary, secondary, &state, cfg),
    };
    let chol = Cholesky::new(lin.h).ok_or(MatchError::RankDeficient {
        condition: condition_number_sym6(&lin.h),
    })?;
    let mut predicted = chol.inverse();
    predicted = 0.5 * (predicted + predicted.transpose());

    Ok(SolutionReport {
        estimate: RigidTransform::from_state(&state),
        state,
        predicted_covariance: predicted,
        iterations,
        converged,
        voxels_used: lin.voxels_used,
    })
}


/// Test-only access to the per-voxel residual model, used by the acceptance
/// suite's finite-difference check.
#[doc(hidden)]
pub mod introspect {
    use super::*;

    pub fn residual(
        state: &StateVector,
        mu_p: &Vector3<f64>,
        p_bar: &Vector3<f64>,
    ) -> Vector3<f64> {
        super::residual(state, mu_p, p_bar)
    }

    pub fn residual_jacobian(state: &StateVector, p_bar: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
        super::residual_jacobian(state, p_bar)
    }
}
