//! Coordinate conversions, rotation conventions, and rigid-body transforms.
//!
//! Conventions used throughout the crate:
//!
//! - Spherical coordinates: radius `r`, azimuth `alpha` in `[-pi, pi)`
//!   measured in the x-y plane from +x, elevation `beta` in `[-pi/2, pi/2]`
//!   measured from the x-y plane toward +z. A point converts to Cartesian as
//!   `(r cos(alpha) cos(beta), r sin(alpha) cos(beta), r sin(beta))`.
//! - Euler angles: intrinsic Z-Y-X, i.e. yaw `psi` about z, then pitch
//!   `theta` about the new y, then roll `phi` about the new x. State vectors
//!   are ordered `[x, y, z, phi, theta, psi]`.
//! - Rigid transforms map a point `p` to `R * p - t`. The subtraction of the
//!   translation is deliberate and must be preserved everywhere (the solver
//!   Jacobians depend on it).
//!
//! All operations are pure functions on immutable values and are safe to call
//! concurrently.

use nalgebra::{Matrix3, SVector, Vector3};
use thiserror::Error;

/// 6-DoF state vector `[x, y, z, phi, theta, psi]` (meters and radians).
pub type StateVector = SVector<f64, 6>;

/// Radius below which a Cartesian point is considered degenerate for
/// spherical conversion.
pub const DEGENERATE_RADIUS: f64 = 1e-12;

/// Margin around `pi/2` inside which Euler extraction refuses to run.
pub const GIMBAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// Spherical conversion of a point at (or numerically at) the origin.
    #[error("cannot convert near-origin point to spherical coordinates (|q| = {norm:.3e} m)")]
    DegenerateOrigin { norm: f64 },
    /// Euler extraction with pitch within [`GIMBAL_MARGIN`] of +-pi/2.
    #[error("euler extraction at gimbal lock (|theta| = {theta_abs:.9} rad)")]
    GimbalLock { theta_abs: f64 },
    /// Rotation matrix that is not orthonormal with determinant +1.
    #[error("matrix is not a proper rotation (orthonormality defect {defect:.3e})")]
    NotARotation { defect: f64 },
}

/// Point in spherical coordinates (radius, azimuth, elevation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    /// Radius in meters, `>= 0`.
    pub r: f64,
    /// Azimuth in radians, normalized to `[-pi, pi)`.
    pub alpha: f64,
    /// Elevation in radians, in `[-pi/2, pi/2]`.
    pub beta: f64,
}

impl SphericalPoint {
    pub fn new(r: f64, alpha: f64, beta: f64) -> Self {
        Self { r, alpha, beta }
    }

    /// Converts to Cartesian coordinates.
    pub fn to_cartesian(&self) -> Vector3<f64> {
        cartesian_from_spherical(self)
    }

    /// Converts from Cartesian coordinates; errors on near-origin input.
    pub fn from_cartesian(q: &Vector3<f64>) -> Result<Self, GeometryError> {
        spherical_from_cartesian(q)
    }
}

/// Cartesian point for a spherical point:
/// `(r cos(alpha) cos(beta), r sin(alpha) cos(beta), r sin(beta))`.
pub fn cartesian_from_spherical(p: &SphericalPoint) -> Vector3<f64> {
    let (sa, ca) = p.alpha.sin_cos();
    let (sb, cb) = p.beta.sin_cos();
    Vector3::new(p.r * ca * cb, p.r * sa * cb, p.r * sb)
}

/// Spherical coordinates of a Cartesian point.
///
/// Azimuth is normalized to `[-pi, pi)`; at the poles (beta = +-pi/2) the
/// azimuth is defined as 0. Errors when `|q| < 1e-12` m.
pub fn spherical_from_cartesian(q: &Vector3<f64>) -> Result<SphericalPoint, GeometryError> {
    let r = q.norm();
    if r < DEGENERATE_RADIUS {
        return Err(GeometryError::DegenerateOrigin { norm: r });
    }
    let beta = (q.z / r).clamp(-1.0, 1.0).asin();
    let alpha = if q.x == 0.0 && q.y == 0.0 {
        0.0
    } else {
        normalize_azimuth(q.y.atan2(q.x))
    };
    Ok(SphericalPoint { r, alpha, beta })
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_azimuth(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(std::f64::consts::TAU);
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

/// Rigid-body transform applying `p -> R * p - t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, validating that `rotation` is a proper rotation
    /// (orthonormal, determinant +1) within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det_defect = (rotation.determinant() - 1.0).abs();
        if defect > 1e-9 || det_defect > 1e-9 {
            return Err(GeometryError::NotARotation {
                defect: defect.max(det_defect),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds the transform for a state vector `[x, y, z, phi, theta, psi]`.
    pub fn from_state(state: &StateVector) -> Self {
        Self {
            rotation: rotation_from_euler(state[3], state[4], state[5]),
            translation: Vector3::new(state[0], state[1], state[2]),
        }
    }

    /// Recovers the state vector; errors at gimbal lock.
    pub fn to_state(&self) -> Result<StateVector, GeometryError> {
        let (phi, theta, psi) = euler_from_rotation(&self.rotation)?;
        Ok(SVector::<f64, 6>::from([
            self.translation.x,
            self.translation.y,
            self.translation.z,
            phi,
            theta,
            psi,
        ]))
    }

    /// Applies the transform: `R * p - t`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p - self.translation
    }

    /// Composition `a.compose(b)` applies `b` first, then `a`.
    pub fn compose(&self, b: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * b.rotation,
            translation: self.rotation * b.translation + self.translation,
        }
    }

    /// Inverse transform, so that `t.inverse().compose(&t)` is the identity.
    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Rotation matrix for intrinsic Z-Y-X Euler angles:
/// `R = Rz(psi) * Ry(theta) * Rx(phi)`.
pub fn rotation_from_euler(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (ss, cs) = psi.sin_cos();
    Matrix3::new(
        cs * ct,
        cs * st * sp - ss * cp,
        cs * st * cp + ss * sp,
        ss * ct,
        ss * st * sp + cs * cp,
        ss * st * cp - cs * sp,
        -st,
        ct * sp,
        ct * cp,
    )
}

/// Extracts `(phi, theta, psi)` from a Z-Y-X rotation matrix.
///
/// Errors when `|theta|` is within 1e-6 of `pi/2`, where roll and yaw are
/// not separable.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<(f64, f64, f64), GeometryError> {
    let theta = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    if (std::f64::consts::FRAC_PI_2 - theta.abs()) < GIMBAL_MARGIN {
        return Err(GeometryError::GimbalLock {
            theta_abs: theta.abs(),
        });
    }
    let phi = r[(2, 1)].atan2(r[(2, 2)]);
    let psi = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((phi, theta, psi))
}

/// Partial derivatives of [`rotation_from_euler`] with respect to each angle,
/// in state order `(d/dphi, d/dtheta, d/dpsi)`. Used by the solver Jacobian.
pub fn rotation_derivatives(phi: f64, theta: f64, psi: f64) -> [Matrix3<f64>; 3] {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (ss, cs) = psi.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    let rz = Matrix3::new(cs, -ss, 0.0, ss, cs, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sp, -cp, 0.0, cp, -sp);
    let dry = Matrix3::new(-st, 0.0, ct, 0.0, 0.0, 0.0, -ct, 0.0, -st);
    let drz = Matrix3::new(-ss, -cs, 0.0, cs, -ss, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn spherical_axis_aligned_cases() {
        let p = SphericalPoint::new(1.0, 0.0, 0.0).to_cartesian();
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let p = SphericalPoint::new(2.0, FRAC_PI_2, 0.0).to_cartesian();
        assert_relative_eq!(p, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn spherical_to_cartesian_direct_evaluation() {
        // Independent high-precision evaluation of the conversion at
        // (r=10, alpha=0.3, beta=-0.2):
        //   x = 10*cos(0.3)*cos(-0.2) = 9.3629336358419924111
        //   y = 10*sin(0.3)*cos(-0.2) = 2.8962947762551557629
        //   z = 10*sin(-0.2)          = -1.9866933079506121546
        let p = SphericalPoint::new(10.0, 0.3, -0.2).to_cartesian();
        assert_relative_eq!(p.x, 9.362_933_635_841_992, epsilon = 1e-12);
        assert_relative_eq!(p.y, 2.896_294_776_255_156, epsilon = 1e-12);
        assert_relative_eq!(p.z, -1.986_693_307_950_612, epsilon = 1e-12);
    }

    #[test]
    fn cartesian_to_spherical_basics() {
        let s = spherical_from_cartesian(&Vector3::new(0.0, 3.0, 0.0)).unwrap();
        assert_relative_eq!(s.r, 3.0);
        assert_relative_eq!(s.alpha, FRAC_PI_2);
        assert_relative_eq!(s.beta, 0.0);

        // Pole: azimuth defined as zero.
        let s = spherical_from_cartesian(&Vector3::new(0.0, 0.0, -5.0)).unwrap();
        assert_relative_eq!(s.r, 5.0);
        assert_relative_eq!(s.beta, -FRAC_PI_2);
        assert_eq!(s.alpha, 0.0);
    }

    #[test]
    fn origin_is_degenerate() {
        let err = spherical_from_cartesian(&Vector3::zeros()).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateOrigin { .. }));
    }

    #[test]
    fn azimuth_is_half_open() {
        // x < 0, y = 0 lies exactly on the branch cut and must map to -pi.
        let s = spherical_from_cartesian(&Vector3::new(-2.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.alpha, -PI);
        assert!(s.alpha >= -PI && s.alpha < PI);
    }

    #[test]
    fn round_trip_identity_seeded() {
        // >= 1e4 seeded samples over r in [0.5, 200].
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
        for _ in 0..20_000 {
            let r = rng.random_range(0.5..200.0);
            let alpha = rng.random_range(-PI..PI);
            let beta = rng.random_range(-FRAC_PI_2 + 1e-6..FRAC_PI_2 - 1e-6);
            let q = SphericalPoint::new(r, alpha, beta).to_cartesian();
            let s = spherical_from_cartesian(&q).unwrap();
            let q2 = s.to_cartesian();
            assert_relative_eq!(q, q2, epsilon = 1e-9);
        }
    }

    #[test]
    fn apply_transform_matches_subtraction_convention() {
        let t = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(1.0, 0.0, 0.0),
        };
        let p = Vector3::zeros();
        assert_eq!(t.apply(&p), Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn identity_transform_is_bitwise_identity() {
        let t = RigidTransform::identity();
        let p = Vector3::new(0.123456789, -9.87654321, 4.2e-3);
        let q = t.apply(&p);
        assert_eq!(p.x.to_bits(), q.x.to_bits());
        assert_eq!(p.y.to_bits(), q.y.to_bits());
        assert_eq!(p.z.to_bits(), q.z.to_bits());
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let r = rotation_from_euler(0.0, 0.0, FRAC_PI_2);
        let p = r * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);

        let t = RigidTransform {
            rotation: r,
            translation: Vector3::zeros(),
        };
        assert_relative_eq!(
            t.apply(&Vector3::new(1.0, 0.0, 0.0)),
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn euler_round_trip_small_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
        for _ in 0..1000 {
            let phi = rng.random_range(-0.3..0.3);
            let theta = rng.random_range(-0.3..0.3);
            let psi = rng.random_range(-0.3..0.3);
            let r = rotation_from_euler(phi, theta, psi);
            let (p2, t2, s2) = euler_from_rotation(&r).unwrap();
            assert_relative_eq!(phi, p2, epsilon = 1e-9);
            assert_relative_eq!(theta, t2, epsilon = 1e-9);
            assert_relative_eq!(psi, s2, epsilon = 1e-9);
        }
    }

    #[test]
    fn euler_gimbal_lock_is_an_error() {
        let r = rotation_from_euler(0.1, FRAC_PI_2, -0.2);
        assert!(matches!(
            euler_from_rotation(&r),
            Err(GeometryError::GimbalLock { .. })
        ));
    }

    #[test]
    fn zero_euler_is_identity() {
        assert_relative_eq!(
            rotation_from_euler(0.0, 0.0, 0.0),
            Matrix3::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn compose_and_invert() {
        assert_relative_eq!(
            RigidTransform::identity().inverse().rotation,
            Matrix3::identity()
        );

        let t = RigidTransform {
            rotation: rotation_from_euler(0.2, -0.1, 0.7),
            translation: Vector3::new(1.0, -2.0, 0.5),
        };
        let id = t.compose(&t.inverse());
        assert_relative_eq!(id.rotation, Matrix3::identity(), epsilon = 1e-9);
        assert_relative_eq!(id.translation, Vector3::zeros(), epsilon = 1e-9);

        // Two pure translations compose to the summed translation under the
        // subtraction convention: (p - tb) - ta = p - (ta + tb).
        let a = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(1.0, 2.0, 3.0),
        };
        let b = RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::new(-0.5, 0.25, 1.0),
        };
        let ab = a.compose(&b);
        assert_relative_eq!(ab.translation, Vector3::new(0.5, 2.25, 4.0));
        let p = Vector3::new(0.1, 0.2, 0.3);
        assert_relative_eq!(ab.apply(&p), a.apply(&b.apply(&p)), epsilon = 1e-12);
    }

    #[test]
    fn rotation_stays_orthonormal_over_long_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
        let mut t = RigidTransform::identity();
        for _ in 0..100 {
            let step = RigidTransform {
                rotation: rotation_from_euler(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ),
                translation: Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            };
            t = t.compose(&step);
        }
        let defect = (t.rotation.transpose() * t.rotation - Matrix3::identity()).norm();
        assert!(defect < 1e-7, "orthonormality drift {defect}");
    }

    #[test]
    fn state_round_trip() {
        let state = SVector::<f64, 6>::from([0.5, -0.25, 0.1, 0.02, -0.03, 0.4]);
        let t = RigidTransform::from_state(&state);
        let back = t.to_state().unwrap();
        assert_relative_eq!(state, back, epsilon = 1e-12);
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
        let h = 1e-7;
        for _ in 0..50 {
            let phi = rng.random_range(-0.5..0.5);
            let theta = rng.random_range(-0.5..0.5);
            let psi = rng.random_range(-0.5..0.5);
            let d = rotation_derivatives(phi, theta, psi);
            let fd = [
                (rotation_from_euler(phi + h, theta, psi) - rotation_from_euler(phi - h, theta, psi))
                    / (2.0 * h),
                (rotation_from_euler(phi, theta + h, psi) - rotation_from_euler(phi, theta - h, psi))
                    / (2.0 * h),
                (rotation_from_euler(phi, theta, psi + h) - rotation_from_euler(phi, theta, psi - h))
                    / (2.0 * h),
            ];
            for k in 0..3 {
                assert_relative_eq!(d[k], fd[k], epsilon = 1e-6);
            }
        }
    }
}
