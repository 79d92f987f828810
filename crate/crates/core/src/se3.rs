//! Rigid transforms on SE(3).
//!
//! [`RigidTransform`] stores an explicit rotation matrix and translation.
//! [`ExtrinsicParams`] is the six-number roll-pitch-yaw parametrization used
//! in reports and config files. [`TwistIncrement`] is the small update the
//! ICP and LM solvers produce; it is applied on the left, in the target
//! (camera) frame, through the exact SE(3) exponential.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::Vector6;

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Pitch values closer than this to +/-pi/2 cannot be decomposed.
pub const GIMBAL_MARGIN: f64 = 1e-6;

/// Wrap an angle into (-pi, pi]. Angles already in range are returned untouched.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues coefficients A = sin t / t, B = (1 - cos t) / t^2, C = (t - sin t) / t^3.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-4 {
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Rotation exponential of an axis-angle vector.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let (a, b, _) = exp_coefficients(w.norm());
    let k = skew(w);
    Mat3::identity() + k * a + k * k * b
}

/// Roll-pitch-yaw extrinsic parameters: metres and radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrinsicParams {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl ExtrinsicParams {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll,
            pitch,
            yaw,
        }
    }

    /// Same as [`ExtrinsicParams::new`] with the three angles in degrees.
    pub fn from_degrees(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(x, y, z, roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Angles wrapped into (-pi, pi].
    pub fn normalized(&self) -> Self {
        Self {
            roll: normalize_angle(self.roll),
            pitch: normalize_angle(self.pitch),
            yaw: normalize_angle(self.yaw),
            ..*self
        }
    }

    /// `R = Rz(yaw) Ry(pitch) Rx(roll)`, `t = (x, y, z)`.
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: rot_z(self.yaw) * rot_y(self.pitch) * rot_x(self.roll),
            translation: self.translation(),
        }
    }

    /// Inverse of [`ExtrinsicParams::to_transform`], away from gimbal lock.
    pub fn from_transform(t: &RigidTransform) -> Result<Self> {
        let r = &t.rotation;
        let pitch = (-r[(2, 0)]).atan2(r[(0, 0)].hypot(r[(1, 0)]));
        if pitch.abs() >= FRAC_PI_2 - GIMBAL_MARGIN {
            return Err(Error::GimbalLock { pitch });
        }
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Ok(Self::new(
            t.translation.x,
            t.translation.y,
            t.translation.z,
            roll,
            pitch,
            yaw,
        )
        .normalized())
    }
}

impl fmt::Display for ExtrinsicParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "{} {} {} {} {} {}", a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

/// An element of SE(3): `p -> rotation * p + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn from_rotation(r: Mat3) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            translation: -(rt * self.translation),
            rotation: rt,
        }
    }

    pub fn apply_to_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_to_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `Exp(d) * self`. A zero increment returns `self` unchanged.
    pub fn apply_increment(&self, d: &TwistIncrement) -> RigidTransform {
        if d.is_zero() {
            return self.clone();
        }
        d.exp().compose(self)
    }

    /// Project the rotation back onto SO(3) (nearest rotation in Frobenius norm).
    pub fn renormalized(&self) -> RigidTransform {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        RigidTransform::new(r, self.translation)
    }

    /// Max deviation of `R^T R` from identity, plus `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Mat3::identity()).amax();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    /// Rotation angle (rad) and translation distance (m) between two transforms.
    pub fn distance_to(&self, other: &RigidTransform) -> (f64, f64) {
        let rel = self.rotation.transpose() * other.rotation;
        let s = Vec3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm()
            / 2.0;
        let c = (rel.trace() - 1.0) / 2.0;
        (s.atan2(c), (self.translation - other.translation).norm())
    }

    /// Row-major `r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    /// Inverse of [`RigidTransform::to_row_major`]. Rejects non-rotations (tolerance 1e-6).
    pub fn from_row_major(v: &[f64; 12]) -> Result<RigidTransform> {
        let rotation = Mat3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        let t = RigidTransform::new(rotation, Vec3::new(v[9], v[10], v[11]));
        if !v.iter().all(|x| x.is_finite()) || t.orthonormality_error() > 1e-6 {
            return Err(Error::InvalidArgument(
                "transform rotation block is not orthonormal".into(),
            ));
        }
        Ok(t)
    }
}

impl std::ops::Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// Small twist `(translation, rotation)`, ordered `[vx vy vz wx wy wz]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwistIncrement {
    pub translation: Vec3,
    pub rotation: Vec3,
}

impl TwistIncrement {
    pub fn new(translation: Vec3, rotation: Vec3) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vec3::new(v[0], v[1], v[2]),
            Vec3::new(v[3], v[4], v[5]),
        )
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let (t, r) = (&self.translation, &self.rotation);
        Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
    }

    pub fn is_zero(&self) -> bool {
        self.translation == Vec3::zeros() && self.rotation == Vec3::zeros()
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.translation, -self.rotation)
    }

    /// Exact SE(3) exponential.
    pub fn exp(&self) -> RigidTransform {
        let w = &self.rotation;
        let (a, b, c) = exp_coefficients(w.norm());
        let k = skew(w);
        let k2 = k * k;
        let rotation = Mat3::identity() + k * a + k2 * b;
        let v = Mat3::identity() + k * b + k2 * c;
        RigidTransform::new(rotation, v * self.translation)
    }
}

/// Adjoint action on twists: `T Exp(d) T^-1 = Exp(adjoint(T, d))`.
pub fn adjoint(t: &RigidTransform, d: &TwistIncrement) -> TwistIncrement {
    let w = t.rotation * d.rotation;
    TwistIncrement::new(t.rotation * d.translation + t.translation.cross(&w), w)
}
