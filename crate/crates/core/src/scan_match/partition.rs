//! Voxel partitions the solver can re-bin a transformed cloud into.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::scan_match::VoxelStats;
use crate::spherical_grid::ShadowFilteredGrid;

/// A fixed partition of space into indexed voxels.
///
/// A partition is built once from the primary scan; the solver calls
/// [`VoxelPartition::assign`] for every transformed secondary point on every
/// iteration.
pub trait VoxelPartition: Sync {
    fn voxel_count(&self) -> usize;
    /// Voxel index of a primary-frame point, or `None` if it falls outside
    /// every voxel.
    fn assign(&self, q: &Vector3<f64>) -> Option<usize>;
}

impl VoxelPartition for ShadowFilteredGrid {
    fn voxel_count(&self) -> usize {
        ShadowFilteredGrid::voxel_count(self)
    }

    fn assign(&self, q: &Vector3<f64>) -> Option<usize> {
        ShadowFilteredGrid::assign(self, q)
    }
}

/// Cubic voxel grid over the voxels occupied by the primary scan.
///
/// Voxel `(i, j, k)` covers `anchor + edge*[i, i+1) x [j, j+1) x [k, k+1)`.
#[derive(Debug, Clone)]
pub struct CartesianGrid {
    pub edge: f64,
    pub anchor: Vector3<f64>,
    index: HashMap<(i64, i64, i64), u32>,
    keys: Vec<(i64, i64, i64)>,
}

impl CartesianGrid {
    /// Integer voxel key of a point.
    pub fn key_of(&self, q: &Vector3<f64>) -> (i64, i64, i64) {
        (
            ((q.x - self.anchor.x) / self.edge).floor() as i64,
            ((q.y - self.anchor.y) / self.edge).floor() as i64,
            ((q.z - self.anchor.z) / self.edge).floor() as i64,
        )
    }

    pub fn keys(&self) -> &[(i64, i64, i64)] {
        &self.keys
    }
}

impl VoxelPartition for CartesianGrid {
    fn voxel_count(&self) -> usize {
        self.keys.len()
    }

    fn assign(&self, q: &Vector3<f64>) -> Option<usize> {
        self.index.get(&self.key_of(q)).map(|&i| i as usize)
    }
}

/// Grid anchor placing the planes `y = wall_y` and `z = ground_z` through
/// voxel centers rather than voxel boundaries. Aligning the dominant wall
/// this way is the favorable configuration for a Cartesian-grid matcher.
pub fn anchor_bisecting_planes(edge: f64, wall_y: f64, ground_z: f64) -> Vector3<f64> {
    Vector3::new(0.0, wall_y - 0.5 * edge, ground_z - 0.5 * edge)
}

/// Cartesian grid built from a primary/secondary scan pair.
#[derive(Debug, Clone)]
pub struct PreparedCartesian {
    pub grid: CartesianGrid,
    /// Per-voxel primary stats; `None` where the primary holds too few
    /// points for a usable distribution.
    pub primary: Vec<Option<VoxelStats>>,
    /// Per-voxel secondary stats at the identity transform.
    pub secondary: Vec<Option<VoxelStats>>,
}

/// Bins both clouds into cubic voxels of the given edge length (no shadow
/// filtering). The voxel set is taken from the primary scan; voxels with
/// fewer than `min_points` primary points are dropped entirely.
pub fn cartesian_grid_prepare(
    primary: &PointCloud,
    secondary: &PointCloud,
    edge: f64,
    anchor: Vector3<f64>,
    min_points: usize,
) -> PreparedCartesian {
    let probe = CartesianGrid {
        edge,
        anchor,
        index: HashMap::new(),
        keys: Vec::new(),
    };
    let mut counts: HashMap<(i64, i64, i64), u32> = HashMap::new();
    for p in primary.iter() {
        *counts.entry(probe.key_of(p)).or_insert(0) += 1;
    }
    let mut keys: Vec<(i64, i64, i64)> = counts
        .into_iter()
        .filter(|&(_, n)| n as usize >= min_points.max(2))
        .map(|(k, _)| k)
        .collect();
    keys.sort_unstable();
    let index: HashMap<(i64, i64, i64), u32> = keys
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i as u32))
        .collect();
    let grid = CartesianGrid {
        edge,
        anchor,
        index,
        keys,
    };

    let bin = |cloud: &PointCloud| {
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); grid.voxel_count()];
        for (k, p) in cloud.iter().enumerate() {
            if let Some(i) = grid.assign(p) {
                members[i].push(k as u32);
            }
        }
        members
    };
    let stats = |cloud: &PointCloud, members: Vec<Vec<u32>>| {
        members
            .into_iter()
            .map(|m| {
                if m.len() >= min_points.max(2) {
                    VoxelStats::from_indexed(cloud, &m).ok()
                } else {
                    None
                }
            })
            .collect()
    };
    let primary_stats = stats(primary, bin(primary));
    let secondary_stats = stats(secondary, bin(secondary));
    PreparedCartesian {
        grid,
        primary: primary_stats,
        secondary: secondary_stats,
    }
}
