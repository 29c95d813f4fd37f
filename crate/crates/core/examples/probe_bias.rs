// Temporary diagnostic: per-voxel x-pull at the truth state on the desk
// roadway scene. Not part of the deliverable.

use nalgebra::{Matrix3, Vector3};
use shadowgrid::geometry::{rotation_derivatives, RigidTransform};
use shadowgrid::harness::{ExperimentConfig, Method};
use shadowgrid::scan_match::{match_scans, VoxelStats};
use shadowgrid::sim::{generate_trajectory, raycast_returns, scan_from_returns};
use shadowgrid::spherical_grid::build_shadow_filtered_grid;

fn main() {
    let mut cfg = ExperimentConfig::desk_roadway(Method::SphericalShadow);
    cfg.lidar.channels = 64;
    let scene = cfg.scene.build();
    let lidar = cfg.lidar.build().unwrap();
    let traj = generate_trajectory(&scene, &cfg.trajectory).unwrap();
    let loc = 4usize;
    let pose_p = traj.poses[loc];
    let pose_s = traj.poses[loc + 1];
    let truth = pose_p.transform_from(&pose_s);
    let truth_state = truth.to_state().unwrap();
    println!("truth state {:?}", <[f64; 6]>::from(truth_state));

    let rp = raycast_returns(&scene, &lidar, &pose_p).unwrap();
    let rs = raycast_returns(&scene, &lidar, &pose_s).unwrap();
    let (primary, labels_p) = scan_from_returns(&rp, lidar.range_noise_sigma, 101);
    let (secondary, _) = scan_from_returns(&rs, lidar.range_noise_sigma, 202);

    let wcfg = cfg.grid.build(&cfg.lidar);
    let grid = build_shadow_filtered_grid(&primary, &wcfg).unwrap();
    let mcfg = cfg.matcher.build();
    let stats: Vec<Option<VoxelStats>> = grid
        .voxels
        .iter()
        .map(|v| {
            if v.retained.len() >= mcfg.min_points_per_voxel.max(2) {
                VoxelStats::from_indexed(&primary, &v.retained).ok()
            } else {
                None
            }
        })
        .collect();

    // Assign secondary at truth.
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); grid.voxels.len()];
    for (k, p) in secondary.iter().enumerate() {
        let q = truth.apply(p);
        if let Some(i) = shadowgrid::scan_match::VoxelPartition::assign(&grid, &q) {
            members[i].push(k as u32);
        }
    }

    let dr = rotation_derivatives(truth_state[3], truth_state[4], truth_state[5]);
    let mut rows = Vec::new();
    let mut h_xx_total = 0.0;
    for (i, v) in grid.voxels.iter().enumerate() {
        let Some(sp) = stats[i] else { continue };
        if members[i].len() < mcfg.min_points_per_voxel.max(2) {
            continue;
        }
        let ss = VoxelStats::from_indexed(&secondary, &members[i]).unwrap();
        let mu_s = truth.rotation * ss.mean - truth.translation;
        let cov_s = truth.rotation * ss.covariance * truth.rotation.transpose();
        let w_inv = sp.covariance / sp.count as f64
            + cov_s / ss.count as f64
            + Matrix3::identity() * mcfg.covariance_floor;
        let w = w_inv.try_inverse().unwrap();
        let y = sp.mean - mu_s;
        // J columns: x y z angle parts; g = J^T W y; x component = (W y)_x.
        let g_x = (w * y).x;
        let h_xx = w[(0, 0)];
        h_xx_total += h_xx;
        let _ = &dr;
        // Classify by primary labels of the voxel's retained points.
        let mut n_ground = 0;
        let mut n_wall = 0;
        let mut n_cyl = 0;
        for &k in &v.retained {
            match labels_p[k as usize] {
                shadowgrid::sim::PrimitiveId::Ground => n_ground += 1,
                shadowgrid::sim::PrimitiveId::Wall(_) => n_wall += 1,
                shadowgrid::sim::PrimitiveId::Cylinder(_) => n_cyl += 1,
            }
        }
        let label = if n_cyl > n_ground && n_cyl > n_wall {
            "cyl"
        } else if n_wall > n_ground {
            "wall"
        } else {
            "ground"
        };
        rows.push((g_x.abs(), g_x, h_xx, i, label, v.i, v.j, v.r_lower, v.r_upper, sp.count, ss.count, y));
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("total H_xx {h_xx_total:.1}; top |g_x| voxels:");
    println!("{:>8} {:>8} {:>6} {:>5} {:>3} {:>3} {:>7} {:>7} {:>5} {:>5}  y", "g_x", "h_xx", "label", "vox", "i", "j", "r_lo", "r_hi", "n_p", "n_s");
    for r in rows.iter().take(25) {
        println!(
            "{:>8.2} {:>8.1} {:>6} {:>5} {:>3} {:>3} {:>7.2} {:>7.2} {:>5} {:>5}  [{:+.3} {:+.3} {:+.3}]",
            r.1, r.2, r.4, r.3, r.5, r.6, r.7, r.8, r.9, r.10, r.11.x, r.11.y, r.11.z
        );
    }
    let pull: f64 = rows.iter().map(|r| r.1).sum();
    println!("net g_x at truth: {pull:.2} -> naive dx = {:+.4} m", -pull / h_xx_total);

    // Also run the full solver from truth init and from identity.
    let from_truth = match_scans(&grid, &stats, &secondary, &truth, &mcfg);
    match from_truth {
        Ok(r) => println!(
            "solve from truth: x err {:+.4} m, iters {}, conv {}",
            r.state[0] - truth_state[0],
            r.iterations,
            r.converged
        ),
        Err(e) => println!("solve from truth failed: {e}"),
    }
    let from_id = match_scans(
        &grid,
        &stats,
        &secondary,
        &RigidTransform::identity(),
        &mcfg,
    );
    match from_id {
        Ok(r) => println!(
            "solve from identity: x err {:+.4} m, iters {}, conv {}",
            r.state[0] - truth_state[0],
            r.iterations,
            r.converged
        ),
        Err(e) => println!("solve from identity failed: {e}"),
    }
}
