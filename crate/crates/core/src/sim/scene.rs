//! Analytic scene primitives and ray intersection.
//!
//! Scenes are built from exact primitives (flat ground or a sinusoidal
//! heightfield, finite vertical wall rectangles, vertical cylinders) instead
//! of triangle meshes, so intersections are closed-form (or a guarded
//! root-find for the heightfield) and reproducible to machine precision.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which primitive produced a lidar return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveId {
    Ground,
    Wall(usize),
    Cylinder(usize),
}

/// One sinusoidal terrain component `amplitude * sin(kx*x + ky*y + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineWave {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

/// Smooth band-limited terrain over a square `[-half_extent, half_extent]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightfield {
    pub half_extent: f64,
    pub components: Vec<SineWave>,
}

impl Heightfield {
    /// Seeded sum of sinusoids: `waves` components with wavelengths in
    /// `[15, 60]` m, random directions and phases, amplitudes summing to
    /// roughly `relief_amplitude`.
    pub fn band_limited(half_extent: f64, relief_amplitude: f64, waves: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let components = (0..waves)
            .map(|_| {
                let wavelength = rng.random_range(15.0..60.0);
                let k = std::f64::consts::TAU / wavelength;
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                SineWave {
                    amplitude: relief_amplitude / waves as f64 * rng.random_range(0.5..1.5),
                    kx: k * dir.cos(),
                    ky: k * dir.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        Self {
            half_extent,
            components,
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.components
            .iter()
            .map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin())
            .sum()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half_extent && y.abs() <= self.half_extent
    }

    /// Upper bound on `|grad h|`, used to choose safe ray-march steps.
    pub fn gradient_bound(&self) -> f64 {
        self.components
            .iter()
            .map(|w| w.amplitude.abs() * (w.kx * w.kx + w.ky * w.ky).sqrt())
            .sum()
    }

    /// Nearest intersection of the ray `o + t*d` (`d` unit length) with the
    /// terrain surface, for `t` in `[t_min, t_max]`.
    ///
    /// Marches with steps bounded by the terrain's Lipschitz constant (so a
    /// crossing can never be stepped over) and refines by bisection.
    pub fn raycast(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        const MIN_STEP: f64 = 0.05;
        let d_xy = (d.x * d.x + d.y * d.y).sqrt();
        let rate_bound = d.z.abs() + self.gradient_bound() * d_xy;
        let clearance = |t: f64| {
            let p = o + d * t;
            p.z - self.height(p.x, p.y)
        };
        let mut t = t_min.max(0.0);
        if clearance(t) <= 0.0 {
            return None; // starts at or below the surface
        }
        loop {
            let f = clearance(t);
            let step = (0.9 * f / rate_bound).max(MIN_STEP);
            let t_next = t + step;
            if t_next > t_max {
                return None;
            }
            let p = o + d * t_next;
            if !self.contains(p.x, p.y) {
                return None; // left the terrain extent (square is convex)
            }
            if clearance(t_next) <= 0.0 {
                // Bisect the bracketing interval down to ~1e-7 m.
                let (mut lo, mut hi) = (t, t_next);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if clearance(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let hit = 0.5 * (lo + hi);
                return (hit >= t_min).then_some(hit);
            }
            t = t_next;
        }
    }
}

/// Ground surface: a flat plane or a heightfield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Ground {
    Flat { z: f64 },
    Heightfield(Heightfield),
}

/// Finite vertical rectangle: base segment from `corner` along `edge`
/// (horizontal), extruded upward by `height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub corner: Vector3<f64>,
    pub edge: Vector3<f64>,
    pub height: f64,
}

impl Wall {
    fn raycast(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        // Plane with horizontal normal perpendicular to the edge.
        let n = Vector3::new(-self.edge.y, self.edge.x, 0.0).normalize();
        let denom = d.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.corner - o).dot(&n) / denom;
        if t < t_min || t > t_max {
            return None;
        }
        let p = o + d * t;
        let along = (p - self.corner).dot(&self.edge) / self.edge.norm_squared();
        let up = p.z - self.corner.z;
        ((0.0..=1.0).contains(&along) && (0.0..=self.height).contains(&up)).then_some(t)
    }
}

/// Vertical circular column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Cylinder {
    fn raycast(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        let ox = o.x - self.center_x;
        let oy = o.y - self.center_y;
        let a = d.x * d.x + d.y * d.y;
        if a < 1e-18 {
            return None; // vertical ray: side surface not hit, caps not modeled
        }
        let b = 2.0 * (ox * d.x + oy * d.y);
        let c = ox * ox + oy * oy - self.radius * self.radius;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
            if t >= t_min && t <= t_max {
                let z = o.z + d.z * t;
                if z >= self.z_min && z <= self.z_max {
                    return Some(t);
                }
            }
        }
        None
    }
}

/// Analytic scene: ground surface plus walls and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub ground: Ground,
    pub walls: Vec<Wall>,
    pub cylinders: Vec<Cylinder>,
}

impl Scene {
    /// Ground surface height below `(x, y)`. Flat ground extends everywhere;
    /// outside a heightfield's extent there is no surface and `None` is
    /// returned.
    pub fn ground_height(&self, x: f64, y: f64) -> Option<f64> {
        match &self.ground {
            Ground::Flat { z } => Some(*z),
            Ground::Heightfield(h) => h.contains(x, y).then(|| h.height(x, y)),
        }
    }

    /// Nearest intersection of a world-frame ray with any primitive, within
    /// `[t_min, t_max]`.
    pub fn nearest_hit(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        t_max: f64,
    ) -> Option<(f64, PrimitiveId)> {
        let mut best: Option<(f64, PrimitiveId)> = None;
        let mut consider = |hit: Option<f64>, id: PrimitiveId| {
            if let Some(t) = hit {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, id));
                }
            }
        };
        match &self.ground {
            Ground::Flat { z } => {
                if dir.z.abs() > 1e-12 {
                    let t = (z - origin.z) / dir.z;
                    if t >= t_min && t <= t_max {
                        consider(Some(t), PrimitiveId::Ground);
                    }
                }
            }
            Ground::Heightfield(h) => {
                consider(h.raycast(origin, dir, t_min, t_max), PrimitiveId::Ground);
            }
        }
        for (k, wall) in self.walls.iter().enumerate() {
            consider(wall.raycast(origin, dir, t_min, t_max), PrimitiveId::Wall(k));
        }
        for (k, cyl) in self.cylinders.iter().enumerate() {
            consider(cyl.raycast(origin, dir, t_min, t_max), PrimitiveId::Cylinder(k));
        }
        best
    }
}

/// Layout of the roadway scene: flat ground, sound walls on both sides of
/// the road, and a line of columns between the lane and one wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadwayParams {
    pub column_count: usize,
    pub column_radius_m: f64,
    pub column_spacing_m: f64,
    /// Lateral offset of the column line from the lane center.
    pub column_line_y_m: f64,
    pub column_height_m: f64,
    /// x position of the first column.
    pub first_column_x_m: f64,
    /// Lateral offset of each wall from the lane center (walls at +-offset).
    pub wall_offset_y_m: f64,
    pub wall_height_m: f64,
    pub wall_x_min_m: f64,
    pub wall_x_max_m: f64,
}

impl Default for RoadwayParams {
    fn default() -> Self {
        Self {
            column_count: 10,
            column_radius_m: 0.4,
            column_spacing_m: 4.0,
            column_line_y_m: 6.0,
            column_height_m: 5.0,
            first_column_x_m: -2.0,
            wall_offset_y_m: 10.0,
            wall_height_m: 4.0,
            wall_x_min_m: -40.0,
            wall_x_max_m: 60.0,
        }
    }
}

/// Flat-ground roadway with parallel walls and a line of columns that cast
/// shadows on both the ground and the wall behind them.
pub fn build_roadway_scene(params: &RoadwayParams) -> Scene {
    let span = params.wall_x_max_m - params.wall_x_min_m;
    let walls = [-1.0, 1.0]
        .iter()
        .map(|side| Wall {
            corner: Vector3::new(params.wall_x_min_m, side * params.wall_offset_y_m, 0.0),
            edge: Vector3::new(span, 0.0, 0.0),
            height: params.wall_height_m,
        })
        .collect();
    let cylinders = (0..params.column_count)
        .map(|k| Cylinder {
            center_x: params.first_column_x_m + k as f64 * params.column_spacing_m,
            center_y: params.column_line_y_m,
            radius: params.column_radius_m,
            z_min: 0.0,
            z_max: params.column_height_m,
        })
        .collect();
    Scene {
        ground: Ground::Flat { z: 0.0 },
        walls,
        cylinders,
    }
}

/// Layout of the offroad scene: a square of hilly terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffroadParams {
    pub extent_m: f64,
    pub relief_amplitude_m: f64,
    pub wave_count: usize,
}

impl Default for OffroadParams {
    fn default() -> Self {
        Self {
            extent_m: 100.0,
            relief_amplitude_m: 3.0,
            wave_count: 8,
        }
    }
}

/// Hilly offroad terrain from seeded band-limited noise. The same seed
/// always produces the same heightfield, bit for bit.
pub fn build_offroad_scene(params: &OffroadParams, seed: u64) -> Scene {
    Scene {
        ground: Ground::Heightfield(Heightfield::band_limited(
            params.extent_m / 2.0,
            params.relief_amplitude_m,
            params.wave_count,
            seed,
        )),
        walls: Vec::new(),
        cylinders: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ray_hits_plane() {
        let scene = Scene {
            ground: Ground::Flat { z: 0.0 },
            walls: vec![],
            cylinders: vec![],
        };
        let o = Vector3::new(0.0, 0.0, 2.0);
        let d = Vector3::new(1.0, 0.0, -1.0).normalize();
        let (t, id) = scene.nearest_hit(&o, &d, 0.0, 100.0).unwrap();
        assert_eq!(id, PrimitiveId::Ground);
        assert_relative_eq!(t, 2.0 * 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ray_hits_cylinder_front_face() {
        // Beam along +x toward a unit-radius column centered at (10, 0)
        // enters the surface at x = 9.
        let cyl = Cylinder {
            center_x: 10.0,
            center_y: 0.0,
            radius: 1.0,
            z_min: -5.0,
            z_max: 5.0,
        };
        let t = cyl
            .raycast(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0), 0.0, 100.0)
            .unwrap();
        assert_relative_eq!(t, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn ray_grazing_cylinder_hits_wall_behind() {
        let scene = Scene {
            ground: Ground::Flat { z: -10.0 },
            walls: vec![Wall {
                corner: Vector3::new(20.0, -50.0, -10.0),
                edge: Vector3::new(0.0, 100.0, 0.0),
                height: 20.0,
            }],
            cylinders: vec![Cylinder {
                center_x: 10.0,
                center_y: 0.0,
                radius: 1.0,
                z_min: -10.0,
                z_max: 10.0,
            }],
        };
        let o = Vector3::zeros();
        // Slightly outside the tangent direction: passes the column, hits
        // the wall; slightly inside: hits the column.
        let tangent = (1.0f64 / 10.0).asin();
        let out = Vector3::new((tangent + 1e-3).cos(), (tangent + 1e-3).sin(), 0.0);
        let (t_out, id_out) = scene.nearest_hit(&o, &out, 0.0, 100.0).unwrap();
        assert_eq!(id_out, PrimitiveId::Wall(0));
        assert!(t_out > 19.0);
        let inn = Vector3::new((tangent - 1e-3).cos(), (tangent - 1e-3).sin(), 0.0);
        let (t_in, id_in) = scene.nearest_hit(&o, &inn, 0.0, 100.0).unwrap();
        assert_eq!(id_in, PrimitiveId::Cylinder(0));
        assert!(t_in < 11.0);
        // Adjacent beams differ by the occluder-to-wall gap.
        assert!(t_out - t_in > 8.0);
    }

    #[test]
    fn wall_is_finite() {
        let wall = Wall {
            corner: Vector3::new(0.0, 5.0, 0.0),
            edge: Vector3::new(10.0, 0.0, 0.0),
            height: 2.0,
        };
        let d = Vector3::new(0.0, 1.0, 0.0);
        // Inside the rectangle.
        assert!(wall
            .raycast(&Vector3::new(5.0, 0.0, 1.0), &d, 0.0, 100.0)
            .is_some());
        // Beyond the far end.
        assert!(wall
            .raycast(&Vector3::new(11.0, 0.0, 1.0), &d, 0.0, 100.0)
            .is_none());
        // Above the top.
        assert!(wall
            .raycast(&Vector3::new(5.0, 0.0, 2.5), &d, 0.0, 100.0)
            .is_none());
    }

    #[test]
    fn heightfield_is_deterministic() {
        let a = Heightfield::band_limited(50.0, 3.0, 8, 7);
        let b = Heightfield::band_limited(50.0, 3.0, 8, 7);
        assert_eq!(a, b);
        for (x, y) in [(0.0, 0.0), (12.3, -41.0), (-3.3, 17.9)] {
            assert_eq!(a.height(x, y).to_bits(), b.height(x, y).to_bits());
        }
        let c = Heightfield::band_limited(50.0, 3.0, 8, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn heightfield_raycast_matches_fine_march() {
        let h = Heightfield::band_limited(50.0, 3.0, 8, 42);
        let o = Vector3::new(0.0, 0.0, h.height(0.0, 0.0) + 2.0);
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5EED_0030);
        let mut hits = 0;
        for _ in 0..150 {
            let alpha = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let beta = rng.random_range(-0.4f64..0.02);
            let d = Vector3::new(
                alpha.cos() * beta.cos(),
                alpha.sin() * beta.cos(),
                beta.sin(),
            );
            let analytic = h.raycast(&o, &d, 0.5, 70.0);
            // Brute force: march at 1 mm and bracket the first crossing.
            let mut brute = None;
            let mut t = 0.5;
            while t <= 70.0 {
                let p = o + d * t;
                if !h.contains(p.x, p.y) {
                    break;
                }
                if p.z - h.height(p.x, p.y) <= 0.0 {
                    brute = Some(t);
                    break;
                }
                t += 1e-3;
            }
            match (analytic, brute) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 2e-3, "analytic {a} vs brute {b}");
                    hits += 1;
                }
                (None, None) => {}
                other => panic!("hit disagreement: {other:?}"),
            }
        }
        assert!(hits > 30, "test scene produced too few hits ({hits})");
    }

    #[test]
    fn roadway_scene_layout() {
        let scene = build_roadway_scene(&RoadwayParams::default());
        assert_eq!(scene.walls.len(), 2);
        assert_eq!(scene.cylinders.len(), 10);
        assert_eq!(scene.ground_height(3.0, 4.0), Some(0.0));
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = build_offroad_scene(&OffroadParams::default(), 3);
        let text = serde_json::to_string(&scene).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(scene, back);
    }
}
