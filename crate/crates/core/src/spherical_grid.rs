//! Spherical wedge binning and shadow-filtered voxelization.
//!
//! Each scan point is binned by azimuth and elevation into a wedge that is
//! unbounded radially. Within a wedge, the sorted radii are scanned for jumps
//! larger than a threshold `T`; a jump separates returns from different
//! surfaces (e.g. a column and the ground behind it). The nearest run of more
//! than `N` jump-free points becomes the wedge's single radial voxel, its
//! bounds padded slightly so that a secondary scan observing the same surface
//! from a nearby pose still lands inside. Everything behind the nearest
//! cluster — which is exactly where that surface casts its shadow — is
//! excluded.
//!
//! The grid is built from the primary scan only. Secondary-scan points are
//! transformed into the primary frame and kept only where they fall inside an
//! existing voxel; no new voxels are created for them.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::{spherical_from_cartesian, RigidTransform};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid wedge grid config: {reason}")]
    InvalidConfig { reason: String },
    #[error("cannot build a grid from an empty point cloud")]
    EmptyCloud,
    #[error("failed to write grid dump to {path}: {source}")]
    DumpIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parameters of the wedge grid and of the jump-detection pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeGridConfig {
    /// Azimuth bin width, radians. `2*pi` must be an integer multiple.
    pub azimuth_bin: f64,
    /// Elevation bin width, radians.
    pub elevation_bin: f64,
    /// Lower elevation limit, radians (typically the sensor's limit).
    pub beta_min: f64,
    /// Upper elevation limit, radians; points at `beta >= beta_max` drop.
    pub beta_max: f64,
    /// Radial gap above which consecutive sorted returns are treated as
    /// belonging to different surfaces, meters.
    pub jump_threshold: f64,
    /// A cluster is kept only if it holds strictly more than this many
    /// points.
    pub min_cluster: usize,
    /// Maximum radial padding applied to each voxel bound, meters.
    pub max_pad: f64,
}

impl WedgeGridConfig {
    /// Validates bin widths, wraparound closure, and threshold signs.
    pub fn validate(&self) -> Result<(), GridError> {
        let fail = |reason: String| Err(GridError::InvalidConfig { reason });
        if !(self.azimuth_bin > 0.0) || !(self.elevation_bin > 0.0) {
            return fail("bin widths must be positive".into());
        }
        let n_az = (TAU / self.azimuth_bin).round();
        if n_az < 1.0 || (n_az * self.azimuth_bin - TAU).abs() > 1e-9 {
            return fail(format!(
                "2*pi must be an integer multiple of the azimuth bin ({} rad)",
                self.azimuth_bin
            ));
        }
        if !(self.beta_max > self.beta_min) {
            return fail("elevation limits must satisfy beta_min < beta_max".into());
        }
        if !(self.jump_threshold > 0.0) {
            return fail("jump threshold must be positive".into());
        }
        if self.min_cluster < 2 {
            return fail("min cluster size must be at least 2".into());
        }
        if !(self.max_pad >= 0.0) {
            return fail("max pad must be non-negative".into());
        }
        Ok(())
    }

    /// Number of azimuth bins (wrapping at +-pi).
    pub fn azimuth_bins(&self) -> usize {
        (TAU / self.azimuth_bin).round() as usize
    }

    /// Number of elevation bins covering `[beta_min, beta_max)`.
    pub fn elevation_bins(&self) -> usize {
        (((self.beta_max - self.beta_min) / self.elevation_bin).ceil() as usize).max(1)
    }

    /// Lower azimuth edge of bin `i`.
    pub fn azimuth_edge(&self, i: usize) -> f64 {
        -PI + i as f64 * self.azimuth_bin
    }

    /// Lower elevation edge of bin `j`.
    pub fn elevation_edge(&self, j: usize) -> f64 {
        self.beta_min + j as f64 * self.elevation_bin
    }

    fn bin_of(&self, alpha: f64, beta: f64) -> Option<(usize, usize)> {
        if beta < self.beta_min || beta >= self.beta_max {
            return None;
        }
        let n_az = self.azimuth_bins();
        let i = (((alpha + PI) / self.azimuth_bin).floor() as isize).clamp(0, n_az as isize - 1);
        let j = ((beta - self.beta_min) / self.elevation_bin).floor() as usize;
        Some((i as usize, j.min(self.elevation_bins() - 1)))
    }
}

impl Default for WedgeGridConfig {
    /// 7.2 degree bins over a 64-channel-style elevation span, 0.2 m jump
    /// threshold, clusters of more than 50 points, 0.5 m padding.
    fn default() -> Self {
        Self {
            azimuth_bin: 7.2f64.to_radians(),
            elevation_bin: 7.2f64.to_radians(),
            beta_min: -24.8f64.to_radians(),
            beta_max: 2.0f64.to_radians(),
            jump_threshold: 0.2,
            min_cluster: 50,
            max_pad: 0.5,
        }
    }
}

/// One member of a wedge: a point's radius and its index in the source cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeMember {
    pub radius: f64,
    pub index: u32,
}

/// All points of one azimuth/elevation wedge, sorted by ascending radius.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeSet {
    pub i: usize,
    pub j: usize,
    /// Sorted ascending by `(radius, index)`, so ordering is deterministic
    /// regardless of input point order.
    pub members: Vec<WedgeMember>,
}

/// Result of binning a cloud into wedges.
#[derive(Debug, Clone)]
pub struct WedgeAssignment {
    /// Non-empty wedges, ordered by `(j, i)`.
    pub wedges: Vec<WedgeSet>,
    /// Points outside the elevation limits (not an error).
    pub dropped: usize,
    /// Points inside the elevation limits (sum of wedge memberships).
    pub in_range: usize,
}

/// Bins every point of `cloud` into its wedge per the half-open interval
/// membership `alpha in [alpha_i, alpha_{i+1})`, `beta in [beta_j, beta_{j+1})`.
///
/// Points with elevation outside `[beta_min, beta_max)` are dropped and
/// counted. Wedges are disjoint and together hold every in-range point.
pub fn assign_wedges(cloud: &PointCloud, cfg: &WedgeGridConfig) -> Result<WedgeAssignment, GridError> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(GridError::EmptyCloud);
    }
    let n_az = cfg.azimuth_bins();
    let n_el = cfg.elevation_bins();
    let mut bins: Vec<Vec<WedgeMember>> = vec![Vec::new(); n_az * n_el];
    let mut dropped = 0usize;
    let mut in_range = 0usize;
    for (k, p) in cloud.iter().enumerate() {
        let Ok(s) = spherical_from_cartesian(p) else {
            dropped += 1;
            continue;
        };
        match cfg.bin_of(s.alpha, s.beta) {
            Some((i, j)) => {
                bins[j * n_az + i].push(WedgeMember {
                    radius: s.r,
                    index: k as u32,
                });
                in_range += 1;
            }
            None => dropped += 1,
        }
    }
    let mut wedges = Vec::new();
    for j in 0..n_el {
        for i in 0..n_az {
            let mut members = std::mem::take(&mut bins[j * n_az + i]);
            if members.is_empty() {
                continue;
            }
            members.sort_by(|a, b| {
                a.radius
                    .partial_cmp(&b.radius)
                    .unwrap()
                    .then(a.index.cmp(&b.index))
            });
            wedges.push(WedgeSet { i, j, members });
        }
    }
    Ok(WedgeAssignment {
        wedges,
        dropped,
        in_range,
    })
}

/// Scans the sorted radii of a wedge for the nearest cluster of more than
/// `min_cluster` points with no internal gap larger than the jump threshold.
///
/// Returns the inclusive index range `(l_min, l_max)` of that cluster, or
/// `None` when no qualifying cluster exists (the whole wedge is excluded).
/// Scanning stops at the first accepted outer bound, so only the nearest
/// cluster is ever kept. A gap equal to the threshold is not a jump.
pub fn adaptive_radial_bounds(radii: &[f64], cfg: &WedgeGridConfig) -> Option<(usize, usize)> {
    if radii.is_empty() {
        return None;
    }
    let mut l_min = 0usize;
    for l in 1..radii.len() {
        if radii[l] - radii[l - 1] > cfg.jump_threshold {
            if l - l_min > cfg.min_cluster {
                return Some((l_min, l - 1));
            }
            l_min = l;
        }
    }
    if radii.len() - l_min > cfg.min_cluster {
        Some((l_min, radii.len() - 1))
    } else {
        None
    }
}

/// Wedge truncated to the padded radial bounds of its nearest cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialVoxel {
    pub i: usize,
    pub j: usize,
    /// Padded inner radial bound, meters (clamped at 0).
    pub r_lower: f64,
    /// Padded outer radial bound, meters.
    pub r_upper: f64,
    /// Cluster bounds before padding.
    pub r_lower_unpadded: f64,
    pub r_upper_unpadded: f64,
    /// Indices (into the primary cloud) of the retained points.
    pub retained: Vec<u32>,
}

/// Expands a voxel's radial bounds by up to `max_pad`, limited on each side
/// to half the distance to the nearest excluded point on that side. A side
/// with no excluded point gets the full pad. The inner bound clamps at 0.
pub fn pad_bounds(
    voxel: &mut RadialVoxel,
    nearest_excluded_inner: Option<f64>,
    nearest_excluded_outer: Option<f64>,
    cfg: &WedgeGridConfig,
) {
    let inner_pad = match nearest_excluded_inner {
        Some(r) => cfg.max_pad.min(0.5 * (voxel.r_lower_unpadded - r)),
        None => cfg.max_pad,
    };
    let outer_pad = match nearest_excluded_outer {
        Some(r) => cfg.max_pad.min(0.5 * (r - voxel.r_upper_unpadded)),
        None => cfg.max_pad,
    };
    voxel.r_lower = (voxel.r_lower_unpadded - inner_pad.max(0.0)).max(0.0);
    voxel.r_upper = voxel.r_upper_unpadded + outer_pad.max(0.0);
}

/// Shadow-filtered voxelization of a primary scan: at most one radial voxel
/// per wedge, bracketing the nearest point cluster.
#[derive(Debug, Clone)]
pub struct ShadowFilteredGrid {
    pub config: WedgeGridConfig,
    pub voxels: Vec<RadialVoxel>,
    /// Dense wedge lookup `(j * azimuth_bins + i) -> voxel index`.
    lookup: Vec<Option<u32>>,
    n_az: usize,
    /// Primary points inside the elevation limits.
    pub in_range: usize,
    /// Primary points outside the elevation limits.
    pub dropped: usize,
}

impl ShadowFilteredGrid {
    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    /// Total primary points retained across all voxels.
    pub fn retained_count(&self) -> usize {
        self.voxels.iter().map(|v| v.retained.len()).sum()
    }

    /// A pose solve needs at least six usable voxels to observe six degrees
    /// of freedom.
    pub fn pose_observable(&self) -> bool {
        self.voxels.len() >= 6
    }

    /// Voxel holding the wedge `(i, j)`, if that wedge produced one.
    pub fn voxel_at(&self, i: usize, j: usize) -> Option<&RadialVoxel> {
        let idx = self.lookup.get(j * self.n_az + i).copied().flatten()?;
        Some(&self.voxels[idx as usize])
    }

    /// Voxel index for an arbitrary Cartesian point (primary frame), if the
    /// point falls inside a voxel's angular and padded radial bounds.
    pub fn assign(&self, q: &nalgebra::Vector3<f64>) -> Option<usize> {
        let s = spherical_from_cartesian(q).ok()?;
        let (i, j) = self.config.bin_of(s.alpha, s.beta)?;
        let idx = self.lookup[j * self.n_az + i]? as usize;
        let v = &self.voxels[idx];
        (s.r >= v.r_lower && s.r <= v.r_upper).then_some(idx)
    }

    /// Writes the grid as delimited text: one `i,j,alpha_i,beta_j,r_lower,
    /// r_upper,count` record per voxel.
    pub fn write_dump(&self, path: &Path) -> Result<(), GridError> {
        let to_err = |source| GridError::DumpIo {
            path: path.display().to_string(),
            source,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(to_err)?);
        write!(w, "{}", self.dump_string()).map_err(to_err)?;
        w.flush().map_err(to_err)
    }

    /// The grid dump as a string (same format as [`Self::write_dump`]).
    pub fn dump_string(&self) -> String {
        let mut out = String::from("i,j,alpha_i,beta_j,r_lower,r_upper,count\n");
        for v in &self.voxels {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                v.i,
                v.j,
                self.config.azimuth_edge(v.i),
                self.config.elevation_edge(v.j),
                v.r_lower,
                v.r_upper,
                v.retained.len()
            ));
        }
        out
    }
}

/// Runs the full preprocessing pass on a primary scan: wedge binning, jump
/// detection, cluster selection, and padding.
///
/// Wedges are processed independently (in parallel); the output is identical
/// regardless of input point order or thread count.
pub fn build_shadow_filtered_grid(
    primary: &PointCloud,
    cfg: &WedgeGridConfig,
) -> Result<ShadowFilteredGrid, GridError> {
    let assignment = assign_wedges(primary, cfg)?;
    let n_az = cfg.azimuth_bins();
    let n_el = cfg.elevation_bins();

    let voxels: Vec<RadialVoxel> = assignment
        .wedges
        .par_iter()
        .filter_map(|wedge| {
            let radii: Vec<f64> = wedge.members.iter().map(|m| m.radius).collect();
            let (l_min, l_max) = adaptive_radial_bounds(&radii, cfg)?;
            let mut voxel = RadialVoxel {
                i: wedge.i,
                j: wedge.j,
                r_lower: radii[l_min],
                r_upper: radii[l_max],
                r_lower_unpadded: radii[l_min],
                r_upper_unpadded: radii[l_max],
                retained: wedge.members[l_min..=l_max].iter().map(|m| m.index).collect(),
            };
            let inner = (l_min > 0).then(|| radii[l_min - 1]);
            let outer = (l_max + 1 < radii.len()).then(|| radii[l_max + 1]);
            pad_bounds(&mut voxel, inner, outer, cfg);
            Some(voxel)
        })
        .collect();

    let mut lookup = vec![None; n_az * n_el];
    for (idx, v) in voxels.iter().enumerate() {
        lookup[v.j * n_az + v.i] = Some(idx as u32);
    }
    let grid = ShadowFilteredGrid {
        config: *cfg,
        voxels,
        lookup,
        n_az,
        in_range: assignment.in_range,
        dropped: assignment.dropped,
    };
    if !grid.pose_observable() {
        log::warn!(
            "shadow-filtered grid has only {} voxels; pose is unobservable",
            grid.voxel_count()
        );
    }
    Ok(grid)
}

/// Assigns secondary-scan points to the primary grid's voxels.
///
/// Each point is mapped into the primary frame by `transform`, converted to
/// spherical coordinates, and retained iff it falls inside an existing
/// voxel's angular and padded radial bounds. Returns one membership list per
/// voxel, aligned with `grid.voxels`.
pub fn filter_secondary(
    secondary: &PointCloud,
    grid: &ShadowFilteredGrid,
    transform: &RigidTransform,
) -> Vec<Vec<u32>> {
    let mut memberships = vec![Vec::new(); grid.voxel_count()];
    for (k, p) in secondary.iter().enumerate() {
        let q = transform.apply(p);
        if let Some(idx) = grid.assign(&q) {
            memberships[idx].push(k as u32);
        }
    }
    memberships
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cfg(jump: f64, min_cluster: usize) -> WedgeGridConfig {
        WedgeGridConfig {
            jump_threshold: jump,
            min_cluster,
            ..WedgeGridConfig::default()
        }
    }

    /// Independent oracle: enumerate all maximal gap-free runs and pick the
    /// nearest one with more than `min_cluster` points.
    fn brute_force_bounds(radii: &[f64], jump: f64, min_cluster: usize) -> Option<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0usize;
        for l in 1..radii.len() {
            if radii[l] - radii[l - 1] > jump {
                runs.push((start, l - 1));
                start = l;
            }
        }
        if !radii.is_empty() {
            runs.push((start, radii.len() - 1));
        }
        runs.into_iter().find(|(a, b)| b - a + 1 > min_cluster)
    }

    #[test]
    fn nearest_cluster_kept_far_point_excluded() {
        let radii = [5.00, 5.05, 5.10, 5.15, 9.00];
        assert_eq!(adaptive_radial_bounds(&radii, &test_cfg(0.2, 3)), Some((0, 3)));
    }

    #[test]
    fn undersized_near_cluster_skipped() {
        let radii = [2.0, 6.0, 6.1, 6.2, 6.3];
        assert_eq!(adaptive_radial_bounds(&radii, &test_cfg(0.2, 3)), Some((1, 4)));
    }

    #[test]
    fn all_gaps_jump_yields_no_voxel() {
        let radii = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
        assert_eq!(adaptive_radial_bounds(&radii, &test_cfg(0.2, 3)), None);
    }

    #[test]
    fn gap_equal_to_threshold_is_not_a_jump() {
        // Exactly representable spacing so the gaps equal the threshold
        // bit for bit.
        let radii = [1.0, 1.25, 1.5, 1.75, 2.0];
        assert_eq!(
            adaptive_radial_bounds(&radii, &test_cfg(0.25, 3)),
            Some((0, 4))
        );
    }

    #[test]
    fn scanning_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0020);
        for _ in 0..2000 {
            let n = rng.random_range(0..60);
            let mut radii: Vec<f64> = Vec::with_capacity(n);
            let mut r = rng.random_range(0.5..5.0);
            for _ in 0..n {
                // Mix of sub-threshold steps, exact-threshold steps, jumps,
                // and duplicates.
                let step = match rng.random_range(0..5) {
                    0 => 0.0,
                    1 => 0.2,
                    2 => rng.random_range(0.0..0.2),
                    3 => rng.random_range(0.2..1.0),
                    _ => rng.random_range(1.0..5.0),
                };
                r += step;
                radii.push(r);
            }
            let min_cluster = rng.random_range(2..8);
            let cfg = test_cfg(0.2, min_cluster);
            assert_eq!(
                adaptive_radial_bounds(&radii, &cfg),
                brute_force_bounds(&radii, 0.2, min_cluster),
                "radii {radii:?} min_cluster {min_cluster}"
            );
        }
    }

    #[test]
    fn padding_limits() {
        let cfg = test_cfg(0.2, 3);
        let mut v = RadialVoxel {
            i: 0,
            j: 0,
            r_lower: 5.0,
            r_upper: 6.0,
            r_lower_unpadded: 5.0,
            r_upper_unpadded: 6.0,
            retained: vec![],
        };
        pad_bounds(&mut v, None, Some(9.0), &cfg);
        assert_eq!((v.r_lower, v.r_upper), (4.5, 6.5));

        pad_bounds(&mut v, None, Some(6.4), &cfg);
        assert_eq!((v.r_lower, v.r_upper), (4.5, 6.2));

        let mut v = RadialVoxel {
            i: 0,
            j: 0,
            r_lower: 0.2,
            r_upper: 1.0,
            r_lower_unpadded: 0.2,
            r_upper_unpadded: 1.0,
            retained: vec![],
        };
        pad_bounds(&mut v, None, None, &cfg);
        assert_eq!(v.r_lower, 0.0);
        assert_eq!(v.r_upper, 1.5);
    }

    #[test]
    fn wedge_membership_half_open_intervals() {
        let cfg = WedgeGridConfig::default();
        // A point barely past -pi lands in azimuth bin 0; a point just below
        // +pi lands in the last bin.
        let near = cfg.bin_of(-PI + 1e-9, -0.1).unwrap();
        let far = cfg.bin_of(PI - 1e-9, -0.1).unwrap();
        assert_eq!(near.0, 0);
        assert_eq!(far.0, cfg.azimuth_bins() - 1);
        assert_ne!(near.0, far.0);

        // Elevation bin 0 starts exactly at beta_min.
        assert_eq!(cfg.bin_of(0.01, cfg.beta_min).unwrap().1, 0);
        assert!(cfg.bin_of(0.01, cfg.beta_max).is_none());
    }

    #[test]
    fn single_point_lands_in_expected_wedge() {
        let cfg = WedgeGridConfig::default();
        let beta = cfg.beta_min + 0.5 * cfg.elevation_bin;
        let p = crate::geometry::SphericalPoint::new(5.0, 0.01, beta).to_cartesian();
        let cloud = PointCloud::new(vec![p]);
        let assignment = assign_wedges(&cloud, &cfg).unwrap();
        assert_eq!(assignment.wedges.len(), 1);
        let wedge = &assignment.wedges[0];
        let expected_i = ((0.01 + PI) / cfg.azimuth_bin).floor() as usize;
        assert_eq!((wedge.i, wedge.j), (expected_i, 0));
    }

    #[test]
    fn uniform_sweep_fills_wedges_evenly() {
        // Ideal beam pattern: every (azimuth step, channel) returns at a
        // fixed radius, with the elevation span an exact multiple of the
        // bin width. Each wedge then holds the same count up to one scan
        // line's worth of points.
        let cfg = WedgeGridConfig {
            beta_min: (-24.8f64).to_radians(),
            beta_max: 4.0f64.to_radians(),
            ..WedgeGridConfig::default()
        };
        let az_steps = 500usize;
        let channels = 32usize;
        let mut points = Vec::new();
        for c in 0..channels {
            let beta = cfg.beta_min
                + (c as f64 + 0.5) * (cfg.beta_max - cfg.beta_min) / channels as f64;
            for a in 0..az_steps {
                let alpha = -PI + (a as f64 + 0.5) * TAU / az_steps as f64;
                points.push(crate::geometry::SphericalPoint::new(10.0, alpha, beta).to_cartesian());
            }
        }
        let cloud = PointCloud::new(points);
        let assignment = assign_wedges(&cloud, &cfg).unwrap();
        assert_eq!(assignment.dropped, 0);
        assert_eq!(assignment.in_range, channels * az_steps);
        let per_line = az_steps / cfg.azimuth_bins();
        let counts: Vec<usize> = assignment.wedges.iter().map(|w| w.members.len()).collect();
        assert_eq!(counts.len(), cfg.azimuth_bins() * cfg.elevation_bins());
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        assert!(
            max - min <= per_line,
            "wedge counts vary by more than one scan line: {min}..{max}"
        );
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let cloud = PointCloud::default();
        assert!(matches!(
            build_shadow_filtered_grid(&cloud, &WedgeGridConfig::default()),
            Err(GridError::EmptyCloud)
        ));
    }

    #[test]
    fn wraparound_closure_is_enforced() {
        let cfg = WedgeGridConfig {
            azimuth_bin: 1.0, // 2*pi is not an integer multiple of 1 rad
            ..WedgeGridConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(GridError::InvalidConfig { .. })
        ));
    }

    /// Synthetic wedge cloud: `clusters` are (center radius, count, spread);
    /// all points share one wedge direction.
    fn wedge_cloud(clusters: &[(f64, usize, f64)]) -> PointCloud {
        let mut points = Vec::new();
        for &(center, count, spread) in clusters {
            for k in 0..count {
                let r = center + spread * (k as f64 / count.max(1) as f64 - 0.5);
                points.push(crate::geometry::SphericalPoint::new(r, 0.05, -0.1).to_cartesian());
            }
        }
        PointCloud::new(points)
    }

    #[test]
    fn grid_build_partitions_points() {
        let cfg = test_cfg(0.2, 4);
        // Near cluster of 8 (kept), far cluster of 12 (excluded: behind).
        let cloud = wedge_cloud(&[(5.0, 8, 0.3), (12.0, 12, 0.3)]);
        let grid = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
        assert_eq!(grid.voxel_count(), 1);
        let v = &grid.voxels[0];
        assert_eq!(v.retained.len(), 8);
        assert_eq!(grid.in_range, 20);
        // Single-cluster property: retained radii have no internal jump.
        let mut radii: Vec<f64> = v
            .retained
            .iter()
            .map(|&k| cloud.points[k as usize].norm())
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in radii.windows(2) {
            assert!(pair[1] - pair[0] <= cfg.jump_threshold);
        }
        // Retained radii stay inside the padded bounds.
        for &r in &radii {
            assert!(r >= v.r_lower && r <= v.r_upper);
        }
    }

    #[test]
    fn voxelization_is_order_independent() {
        let cfg = test_cfg(0.2, 4);
        let cloud = wedge_cloud(&[(5.0, 8, 0.3), (12.0, 12, 0.3), (30.0, 3, 0.1)]);
        let mut shuffled = cloud.clone();
        shuffled.points.reverse();
        let a = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
        let b = build_shadow_filtered_grid(&shuffled, &cfg).unwrap();
        assert_eq!(a.voxel_count(), b.voxel_count());
        for (va, vb) in a.voxels.iter().zip(&b.voxels) {
            assert_eq!((va.i, va.j), (vb.i, vb.j));
            assert_eq!(va.r_lower.to_bits(), vb.r_lower.to_bits());
            assert_eq!(va.r_upper.to_bits(), vb.r_upper.to_bits());
            // Same physical points retained, in the same radius order
            // (indices differ by the reversal, coordinates must not).
            let pa: Vec<f64> = va.retained.iter().map(|&k| cloud.points[k as usize].x).collect();
            let pb: Vec<f64> = vb
                .retained
                .iter()
                .map(|&k| shuffled.points[k as usize].x)
                .collect();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn secondary_identity_matches_primary_memberships() {
        let cfg = test_cfg(0.2, 4);
        let cloud = wedge_cloud(&[(5.0, 8, 0.3), (12.0, 12, 0.3)]);
        let grid = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
        let memberships = filter_secondary(&cloud, &grid, &RigidTransform::identity());
        assert_eq!(memberships.len(), 1);
        let mut got = memberships[0].clone();
        let mut expected = grid.voxels[0].retained.clone();
        got.sort_unstable();
        expected.sort_unstable();
        assert_eq!(got, expected);
    }

    #[test]
    fn secondary_point_behind_outer_bound_is_excluded() {
        let cfg = test_cfg(0.2, 4);
        let cloud = wedge_cloud(&[(5.0, 8, 0.3)]);
        let grid = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
        let v = &grid.voxels[0];
        let beyond = crate::geometry::SphericalPoint::new(v.r_upper + 0.01, 0.05, -0.1)
            .to_cartesian();
        let secondary = PointCloud::new(vec![beyond]);
        let memberships = filter_secondary(&secondary, &grid, &RigidTransform::identity());
        assert!(memberships[0].is_empty());
    }

    #[test]
    fn dump_has_one_record_per_voxel() {
        let cfg = test_cfg(0.2, 4);
        let cloud = wedge_cloud(&[(5.0, 8, 0.3)]);
        let grid = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
        let dump = grid.dump_string();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "i,j,alpha_i,beta_j,r_lower,r_upper,count");
        assert_eq!(lines.len(), 1 + grid.voxel_count());
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn nearest_cluster_property_randomized() {
        // A voxel never skips a nearer qualifying cluster: every maximal
        // gap-free run lying entirely nearer than the selected one must be
        // undersized.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0021);
        let cfg = test_cfg(0.2, 5);
        for _ in 0..200 {
            let clusters: Vec<(f64, usize, f64)> = (0..rng.random_range(1..4))
                .map(|c| {
                    (
                        3.0 + 6.0 * c as f64 + rng.random_range(0.0..2.0),
                        rng.random_range(1..12),
                        rng.random_range(0.05..0.4),
                    )
                })
                .collect();
            let cloud = wedge_cloud(&clusters);
            let grid = build_shadow_filtered_grid(&cloud, &cfg).unwrap();
            if let Some(v) = grid.voxels.first() {
                let mut radii: Vec<f64> = cloud.iter().map(|p| p.norm()).collect();
                radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut start = 0usize;
                for l in 1..=radii.len() {
                    if l == radii.len() || radii[l] - radii[l - 1] > cfg.jump_threshold {
                        let run_len = l - start;
                        if radii[l - 1] < v.r_lower_unpadded {
                            assert!(
                                run_len <= cfg.min_cluster,
                                "skipped a qualifying nearer cluster of {run_len} points"
                            );
                        }
                        start = l;
                    }
                }
            }
        }
    }
}
