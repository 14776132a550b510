//! Rotation representations and angle metrics.
//!
//! Euler angles follow the intrinsic Tait-Bryan order yaw (about y), then
//! pitch (about x), then roll (about z), so that
//! `R = R_y(yaw) * R_x(pitch) * R_z(roll)`. Public values are in degrees.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Pitch values within this distance (degrees) of ±90° are treated as gimbal lock.
pub const GIMBAL_LOCK_TOLERANCE_DEG: f64 = 1e-6;

/// Head orientation as intrinsic yaw/pitch/roll, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Per-component wrap-aware absolute errors against `other`.
    pub fn errors_to(&self, other: &EulerAngles) -> [f64; 3] {
        [
            angle_error(self.yaw, other.yaw),
            angle_error(self.pitch, other.pitch),
            angle_error(self.roll, other.roll),
        ]
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        euler_to_rotation(self)
    }
}

/// A proper rotation in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthogonality. Use [`RotationMatrix::is_valid`]
    /// when the source is untrusted.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `‖MᵀM − I‖∞ ≤ tol` and `|det M − 1| ≤ tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let e = self.0.transpose() * self.0 - Matrix3::identity();
        e.amax() <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn to_euler(&self) -> EulerAngles {
        rotation_to_euler(self).angles
    }

    pub fn to_axis_angle(&self) -> AxisAngle {
        rotation_to_axis_angle(self)
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Rotation vector: direction is the axis, norm is the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        Self(Vector3::new(rx, ry, rz))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        axis_angle_to_rotation(self)
    }
}

/// Result of decomposing a rotation into Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Set when pitch is at ±90°; roll was then fixed to zero.
    pub gimbal_lock: bool,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Maps degrees into `[-180, 180)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

pub fn euler_to_rotation(e: &EulerAngles) -> RotationMatrix {
    RotationMatrix(
        rot_y(e.yaw.to_radians()) * rot_x(e.pitch.to_radians()) * rot_z(e.roll.to_radians()),
    )
}

pub fn rotation_to_euler(r: &RotationMatrix) -> EulerDecomposition {
    let m = &r.0;
    // m[(1,2)] = -sin(pitch), m[(1,0)] = cos(pitch) sin(roll), m[(1,1)] = cos(pitch) cos(roll)
    let cos_pitch = m[(1, 0)].hypot(m[(1, 1)]);
    let pitch = (-m[(1, 2)]).atan2(cos_pitch);
    let pitch_deg = pitch.to_degrees();

    if (pitch_deg.abs() - 90.0).abs() <= GIMBAL_LOCK_TOLERANCE_DEG {
        let sign = if pitch > 0.0 { 1.0 } else { -1.0 };
        let yaw = (sign * m[(0, 1)]).atan2(m[(0, 0)]);
        return EulerDecomposition {
            angles: EulerAngles::new(wrap_degrees(yaw.to_degrees()), sign * 90.0, 0.0),
            gimbal_lock: true,
        };
    }

    let yaw = m[(0, 2)].atan2(m[(2, 2)]);
    let roll = m[(1, 0)].atan2(m[(1, 1)]);
    EulerDecomposition {
        angles: EulerAngles::new(
            wrap_degrees(yaw.to_degrees()),
            pitch_deg,
            wrap_degrees(roll.to_degrees()),
        ),
        gimbal_lock: false,
    }
}

/// `[v]×`, the cross-product matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn axis_angle_to_rotation(a: &AxisAngle) -> RotationMatrix {
    let theta2 = a.0.norm_squared();
    let k = skew(&a.0);
    let (sa, cb) = if theta2 < 1e-8 {
        // Taylor expansions of sin(t)/t and (1 - cos t)/t^2
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    RotationMatrix(Matrix3::identity() + k * sa + k * k * cb)
}

pub fn rotation_to_axis_angle(r: &RotationMatrix) -> AxisAngle {
    let m = &r.0;
    // v = sin(theta) * axis
    let v = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5;
    let sin_theta = v.norm();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < 1e-6 {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        return AxisAngle(v * (1.0 + theta * theta / 6.0));
    }
    if PI - theta > 1e-4 {
        return AxisAngle(v * (theta / sin_theta));
    }

    // Near pi: R ~ 2 a a^T - I. Pick the column with the largest diagonal.
    let sym = (m + m.transpose()) * 0.5;
    let b = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let i = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = b.column(i).into_owned() / b[(i, i)].max(0.0).sqrt();
    axis.normalize_mut();
    // resolve the sign from the antisymmetric part when it is informative
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    AxisAngle(axis * theta)
}

/// Wrap-aware absolute difference between two angles, in `[0, 180]`.
pub fn angle_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn zero_euler_is_identity() {
        let r = euler_to_rotation(&EulerAngles::new(0.0, 0.0, 0.0));
        assert_eq!(r.matrix(), &Matrix3::identity());
    }

    #[test]
    fn yaw_ninety_maps_z_to_x() {
        let r = euler_to_rotation(&EulerAngles::new(90.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        assert!(max_abs_diff(r.matrix(), &expected) < 1e-15);
        let z = r.rotate(&Vector3::z());
        assert!((z - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn euler_round_trips() {
        for e in [
            EulerAngles::new(30.0, 10.0, -5.0),
            EulerAngles::new(-45.0, 20.0, 170.0),
        ] {
            let back = euler_to_rotation(&e).to_euler();
            for (x, y) in e.as_array().iter().zip(back.as_array()) {
                assert!((x - y).abs() < 1e-9, "{e:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn identity_decomposes_to_zero() {
        let d = rotation_to_euler(&RotationMatrix::identity());
        assert_eq!(d.angles, EulerAngles::new(0.0, 0.0, 0.0));
        assert!(!d.gimbal_lock);
    }

    #[test]
    fn gimbal_lock_zeroes_roll() {
        for pitch in [90.0, -90.0] {
            let e = EulerAngles::new(25.0, pitch, 40.0);
            let r = euler_to_rotation(&e);
            let d = rotation_to_euler(&r);
            assert!(d.gimbal_lock);
            assert_eq!(d.angles.roll, 0.0);
            assert_eq!(d.angles.pitch, pitch);
            // the recovered triple still describes the same rotation
            let again = euler_to_rotation(&d.angles);
            assert!(max_abs_diff(again.matrix(), r.matrix()) < 1e-9);
        }
    }

    #[test]
    fn canonical_range_on_output() {
        let d = rotation_to_euler(&euler_to_rotation(&EulerAngles::new(180.0, 0.0, 180.0)));
        assert!(d.angles.yaw >= -180.0 && d.angles.yaw < 180.0);
        assert!(d.angles.roll >= -180.0 && d.angles.roll < 180.0);
        assert_eq!(wrap_degrees(180.0), -180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert_eq!(wrap_degrees(540.0), -180.0);
    }

    #[test]
    fn rodrigues_closed_forms() {
        assert_eq!(
            axis_angle_to_rotation(&AxisAngle::new(0.0, 0.0, 0.0)).matrix(),
            &Matrix3::identity()
        );
        let r = axis_angle_to_rotation(&AxisAngle::new(PI / 2.0, 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!(max_abs_diff(r.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn axis_angle_near_pi() {
        for axis in [
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.6, 0.8),
            Vector3::new(-0.3, 0.5, 0.81).normalize(),
        ] {
            for theta in [PI, PI - 1e-6, PI - 1e-3] {
                let r = axis_angle_to_rotation(&AxisAngle(axis * theta));
                let back = rotation_to_axis_angle(&r);
                let r2 = axis_angle_to_rotation(&back);
                assert!(max_abs_diff(r.matrix(), r2.matrix()) < 1e-9);
                assert!(back.angle() < PI + 1e-6);
            }
        }
    }

    #[test]
    fn angle_error_examples() {
        assert_eq!(angle_error(10.0, 13.0), 3.0);
        assert!((angle_error(179.0, -179.0) - 2.0).abs() < 1e-12);
        assert_eq!(angle_error(-37.5, -37.5), 0.0);
        assert_eq!(angle_error(0.0, 180.0), 180.0);
    }

    proptest! {
        #[test]
        fn euler_matrices_are_rotations(
            yaw in -180.0f64..180.0, pitch in -90.0f64..=90.0, roll in -180.0f64..180.0
        ) {
            let r = euler_to_rotation(&EulerAngles::new(yaw, pitch, roll));
            prop_assert!(r.is_valid(1e-9));
        }

        #[test]
        fn axis_angle_round_trip(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, theta in 0.0f64..(PI - 1e-3)
        ) {
            let v = Vector3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let a = AxisAngle(v.normalize() * theta);
            let back = rotation_to_axis_angle(&axis_angle_to_rotation(&a));
            prop_assert!((back.0 - a.0).amax() < 1e-9);
        }

        #[test]
        fn angle_error_is_a_circle_metric(
            a in -720.0f64..720.0, b in -720.0f64..720.0, c in -720.0f64..720.0
        ) {
            let ab = angle_error(a, b);
            prop_assert!((0.0..=180.0).contains(&ab));
            prop_assert!((ab - angle_error(b, a)).abs() < 1e-9);
            prop_assert!(ab <= angle_error(a, c) + angle_error(c, b) + 1e-9);
            prop_assert_eq!(angle_error(a, a), 0.0);
        }
    }
}
