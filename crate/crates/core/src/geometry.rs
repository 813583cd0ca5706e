//! Scene-centred spherical frame, lighting vectors and rotations.
//!
//! The frame origin is the scene centre. The camera sits on the +z axis and
//! looks along -z, so the polar angle `phi` is measured from the camera axis
//! and the navigation ball's pole is the view direction.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{AlrError, Result};

pub type Vec3 = Vector3<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(TAU) - PI;
    if x <= -PI {
        x += TAU;
    }
    x
}

/// `a - b` reduced modulo 2pi into `(-pi, pi]`.
pub fn wrap_angle_difference(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Light source pose `[r, theta, phi]` in the scene-centred spherical frame.
///
/// `theta` is the azimuth, kept in `(-pi, pi]`; `phi` is the polar angle from
/// the camera axis, kept in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPose {
    r: f64,
    theta: f64,
    phi: f64,
}

impl SphericalPose {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(AlrError::InvalidValue(format!("pose radius must be > 0, got {r}")));
        }
        if !theta.is_finite() || !phi.is_finite() {
            return Err(AlrError::InvalidValue("pose angles must be finite".into()));
        }
        Ok(Self { r, theta: wrap_angle(theta), phi: phi.clamp(0.0, PI) })
    }

    pub fn from_degrees(r: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(r, theta_deg.to_radians(), phi_deg.to_radians())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }

    pub fn to_cartesian(&self) -> Vec3 {
        spherical_to_cartesian(self)
    }

    /// Unit vector pointing from the scene centre toward the pose.
    pub fn direction(&self) -> Vec3 {
        unit_from_angles(self.theta, self.phi)
    }

    /// Tangent unit vectors `(e_theta, e_phi)` at the pose. Defined at the
    /// poles too, where they follow the stored azimuth.
    pub fn tangent_frame(&self) -> (Vec3, Vec3) {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        (Vec3::new(-st, ct, 0.0), Vec3::new(cp * ct, cp * st, -sp))
    }
}

pub fn unit_from_angles(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

/// `(theta, phi)` of a nonzero vector; `theta` is 0 on the polar axis.
pub fn angles_of(v: &Vec3) -> (f64, f64) {
    let n = v.norm();
    let phi = (v.z / n).clamp(-1.0, 1.0).acos();
    let theta = if v.x == 0.0 && v.y == 0.0 { 0.0 } else { v.y.atan2(v.x) };
    (wrap_angle(theta), phi)
}

pub fn spherical_to_cartesian(p: &SphericalPose) -> Vec3 {
    p.direction() * p.r
}

pub fn cartesian_to_spherical(v: &Vec3) -> Result<SphericalPose> {
    let r = v.norm();
    if !(r.is_finite() && r > 0.0) {
        return Err(AlrError::DegenerateGeometry("cannot express the origin as a spherical pose".into()));
    }
    let (theta, phi) = angles_of(v);
    SphericalPose::new(r, theta, phi)
}

/// Parallel lighting vector: direction is the lighting direction, magnitude is
/// the lighting strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LightingVector(Vec3);

impl LightingVector {
    pub fn new(v: Vec3) -> Result<Self> {
        if v.iter().all(|c| c.is_finite()) {
            Ok(Self(v))
        } else {
            Err(AlrError::InvalidValue(format!("non-finite lighting vector {v:?}")))
        }
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Lighting of the given strength arriving from spherical direction `(theta, phi)`.
    pub fn from_angles(strength: f64, theta: f64, phi: f64) -> Result<Self> {
        Self::new(unit_from_angles(theta, phi) * strength)
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }

    pub fn magnitude(&self) -> f64 {
        self.0.norm()
    }

    pub fn direction(&self) -> Option<Vec3> {
        let n = self.0.norm();
        (n > 0.0).then(|| self.0 / n)
    }

    /// `(theta, phi)` of the lighting direction, or `None` for the zero vector.
    pub fn angles(&self) -> Option<(f64, f64)> {
        (self.magnitude() > 0.0).then(|| angles_of(&self.0))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0 * k)
    }
}

const ORTHO_TOL: f64 = 1e-9;

/// Proper rotation of R^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    m: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Rotation by `beta` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: &Vec3, beta: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) || !beta.is_finite() {
            return Err(AlrError::InvalidValue("rotation axis must be nonzero and finite".into()));
        }
        let unit = Unit::new_normalize(*axis);
        let rot = nalgebra::Rotation3::from_axis_angle(&unit, beta);
        Ok(Self { m: *rot.matrix() })
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if err > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(AlrError::InvalidValue(format!("not a rotation: |R^T R - I| = {err:e}, det = {det}")));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Axis-angle form `(beta, e)` with `beta` in `[0, pi]`. The identity
    /// reports `beta = 0` about +z.
    pub fn axis_angle(&self) -> (f64, Vec3) {
        let m = &self.m;
        let v = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let beta = v.norm().atan2(m.trace() - 1.0);
        if beta < 1e-12 {
            return (0.0, Vec3::z());
        }
        if PI - beta > 1e-6 {
            return (beta, v.normalize());
        }
        // Near a half turn the skew part vanishes; read the axis from the
        // symmetric part (R + I) / 2 = e e^T, signed by the skew residue.
        let sym = (m + Matrix3::identity()) * 0.5;
        let mut e = (0..3).map(|i| sym.column(i).into_owned()).max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap().normalize();
        if e.dot(&v) < 0.0 {
            e = -e;
        }
        (beta, e)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.m * v
    }

    pub fn inverse(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { m: self.m * other.m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pole_and_equator() {
        let p = SphericalPose::new(1.0, 0.0, 0.0).unwrap();
        assert!((p.to_cartesian() - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let q = SphericalPose::new(2.0, 0.0, PI / 2.0).unwrap();
        assert!((q.to_cartesian() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wrap_difference_examples() {
        assert!((wrap_angle_difference(0.1, -0.1) - 0.2).abs() < 1e-15);
        assert!((wrap_angle_difference(PI - 0.1, -PI + 0.1) + 0.2).abs() < 1e-12);
        assert_eq!(wrap_angle_difference(1.3, 1.3), 0.0);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
    }

    #[test]
    fn pose_rejects_bad_radius() {
        assert!(SphericalPose::new(0.0, 0.0, 0.0).is_err());
        assert!(SphericalPose::new(-1.0, 0.0, 0.0).is_err());
        let p = SphericalPose::new(1.0, 3.0 * PI, 4.0).unwrap();
        assert!((p.theta() - PI).abs() < 1e-12);
        assert_eq!(p.phi(), PI);
    }

    #[test]
    fn rotation_rejects_non_orthonormal() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        assert!(Rotation3::from_matrix(m).is_err());
        assert!(Rotation3::from_matrix(-Matrix3::identity()).is_err());
    }

    #[test]
    fn half_turn_axis_angle() {
        let r = Rotation3::from_axis_angle(&Vec3::new(0.0, 1.0, 1.0), PI).unwrap();
        let (beta, e) = r.axis_angle();
        assert!((beta - PI).abs() < 1e-9);
        let expect = Vec3::new(0.0, 1.0, 1.0).normalize();
        assert!((e - expect).norm() < 1e-9 || (e + expect).norm() < 1e-9);
    }

    #[test]
    fn cartesian_round_trip_many() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let p =
                SphericalPose::new(rng.random_range(0.01..100.0), rng.random_range(-PI..PI), rng.random_range(1e-3..PI - 1e-3)).unwrap();
            let v = p.to_cartesian();
            assert!((v.norm() - p.r()).abs() <= 1e-12 * p.r().max(1.0));
            let q = cartesian_to_spherical(&v).unwrap();
            worst = worst.max((q.r() - p.r()).abs()).max(wrap_angle_difference(q.theta(), p.theta()).abs()).max((q.phi() - p.phi()).abs());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst:e}");
    }

    proptest! {
        #[test]
        fn wrapped_difference_is_congruent(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let d = wrap_angle_difference(a, b);
            prop_assert!(d > -PI && d <= PI);
            let k = ((a - b) - d) / TAU;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }

        #[test]
        fn axis_angle_round_trip(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            beta in 1e-3f64..(PI - 1e-3),
        ) {
            let axis = Vec3::new(x, y, z);
            prop_assume!(axis.norm() > 1e-2);
            let r = Rotation3::from_axis_angle(&axis, beta).unwrap();
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
            let (b2, e2) = r.axis_angle();
            prop_assert!((b2 - beta).abs() < 1e-9);
            prop_assert!((e2 - axis.normalize()).norm() < 1e-9);
        }
    }
}
