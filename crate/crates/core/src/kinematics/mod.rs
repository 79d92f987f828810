//! Denavit-Hartenberg forward kinematics and contact-point construction.
//!
//! A contact point is the origin of the end-effector frame expressed in the
//! base frame. Joint biases enter as constant offsets added to every encoder
//! reading, so a biased chain deforms the contact map point by point.

mod io;

use nalgebra::{Matrix3xX, Matrix6xX};
use rayon::prelude::*;

pub use io::{read_chain, read_joint_log, write_chain, write_joint_log};

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::se3::RigidTransform;
use crate::{Mat3, Vec3};

/// One DH row: link twist `alpha` (rad), link length `r` (m), link offset `d` (m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhRow {
    pub alpha: f64,
    pub r: f64,
    pub d: f64,
}

impl DhRow {
    pub fn new(alpha: f64, r: f64, d: f64) -> Self {
        Self { alpha, r, d }
    }
}

/// Ordered revolute joints plus a constant bias per joint.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    rows: Vec<DhRow>,
    joint_biases: Vec<f64>,
}

impl KinematicChain {
    pub fn new(rows: Vec<DhRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyChain);
        }
        if rows
            .iter()
            .any(|r| !(r.alpha.is_finite() && r.r.is_finite() && r.d.is_finite()))
        {
            return Err(Error::InvalidArgument("DH row contains a non-finite value".into()));
        }
        let k = rows.len();
        Ok(Self {
            rows,
            joint_biases: vec![0.0; k],
        })
    }

    /// A generic six-joint arm with a UR-like layout (about 1.3 m reach).
    ///
    /// The last row carries a short tool offset tilted 45 degrees from the
    /// wrist axis so every joint, including the last, moves the contact point
    /// out of the touched plane.
    pub fn generic_six_dof() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        Self::new(vec![
            DhRow::new(FRAC_PI_2, 0.0, 0.128),
            DhRow::new(0.0, -0.612, 0.0),
            DhRow::new(0.0, -0.572, 0.0),
            DhRow::new(FRAC_PI_2, 0.0, 0.164),
            DhRow::new(-FRAC_PI_2, 0.0, 0.116),
            DhRow::new(FRAC_PI_4, 0.06, 0.12),
        ])
        .expect("static chain is valid")
    }

    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }

    pub fn joint_biases(&self) -> &[f64] {
        &self.joint_biases
    }

    /// Copy of this chain with the given biases (rad).
    pub fn with_biases(&self, biases: &[f64]) -> Result<Self> {
        if biases.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                found: biases.len(),
                record: None,
            });
        }
        Ok(Self {
            rows: self.rows.clone(),
            joint_biases: biases.to_vec(),
        })
    }

    /// Copy of this chain with all biases zero.
    pub fn nominal(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            joint_biases: vec![0.0; self.dof()],
        }
    }

    /// Upper bound on the distance from the base origin to the end effector.
    pub fn reach(&self) -> f64 {
        self.rows.iter().map(|r| r.r.abs() + r.d.abs()).sum()
    }

    fn check(&self, joints: &JointState) -> Result<()> {
        if joints.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                found: joints.len(),
                record: None,
            });
        }
        Ok(())
    }

    /// Frames `0..=K` in the base frame: `frames[k] = D_01 ... D_{k-1,k}`.
    pub fn joint_frames(&self, joints: &JointState) -> Result<Vec<RigidTransform>> {
        self.check(joints)?;
        let mut frames = Vec::with_capacity(self.dof() + 1);
        let mut acc = RigidTransform::identity();
        frames.push(acc.clone());
        for ((row, theta), bias) in self.rows.iter().zip(joints.angles()).zip(&self.joint_biases) {
            acc = acc.compose(&dh_matrix(theta + bias, row));
            frames.push(acc.clone());
        }
        Ok(frames)
    }

    /// 6xK geometric Jacobian of the end-effector frame: position rows then angular rows.
    pub fn geometric_jacobian(&self, joints: &JointState) -> Result<Matrix6xX<f64>> {
        let frames = self.joint_frames(joints)?;
        let p = frames[self.dof()].translation;
        let mut jac = Matrix6xX::zeros(self.dof());
        for (k, f) in frames[..self.dof()].iter().enumerate() {
            let axis = f.rotation.column(2).into_owned();
            let lin = axis.cross(&(p - f.translation));
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&axis);
        }
        Ok(jac)
    }
}

/// Encoder readings for one pose, in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState(Vec<f64>);

impl JointState {
    pub fn new(angles: Vec<f64>) -> Self {
        Self(angles)
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Element-wise sum, e.g. readings plus biases.
    pub fn offset(&self, delta: &[f64]) -> JointState {
        JointState(self.0.iter().zip(delta).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<f64>> for JointState {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// One contact event and the base-frame point derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactRecord {
    pub joints: JointState,
    pub base_point: Vec3,
}

impl ContactRecord {
    pub fn derive(chain: &KinematicChain, joints: JointState) -> Result<Self> {
        let base_point = contact_point(chain, &joints)?;
        Ok(Self { joints, base_point })
    }
}

/// Standard DH link transform `Rz(theta) Tz(d) Tx(r) Rx(alpha)`.
pub fn dh_matrix(theta: f64, row: &DhRow) -> RigidTransform {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    RigidTransform::new(
        Mat3::new(
            ct,
            -st * ca,
            st * sa,
            st,
            ct * ca,
            -ct * sa,
            0.0,
            sa,
            ca,
        ),
        Vec3::new(row.r * ct, row.r * st, row.d),
    )
}

/// Base-to-end-effector transform, with the chain's biases added to `joints`.
pub fn forward_kinematics(chain: &KinematicChain, joints: &JointState) -> Result<RigidTransform> {
    chain.check(joints)?;
    Ok(chain
        .rows
        .iter()
        .zip(joints.angles())
        .zip(&chain.joint_biases)
        .fold(RigidTransform::identity(), |acc, ((row, theta), bias)| {
            acc.compose(&dh_matrix(theta + bias, row))
        }))
}

/// End-effector origin in the base frame.
pub fn contact_point(chain: &KinematicChain, joints: &JointState) -> Result<Vec3> {
    Ok(forward_kinematics(chain, joints)?.translation)
}

/// Contact map in record order. Unit weights, no normals.
pub fn build_contact_cloud(chain: &KinematicChain, records: &[JointState]) -> Result<PointCloud> {
    let points = records
        .par_iter()
        .enumerate()
        .map(|(i, j)| {
            contact_point(chain, j).map_err(|e| match e {
                Error::DimensionMismatch {
                    expected, found, ..
                } => Error::DimensionMismatch {
                    expected,
                    found,
                    record: Some(i),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud::new(points))
}

/// 3xK sensitivity of the contact point to each joint bias.
///
/// Column k is `z_{k-1} x (p - o_{k-1})`: joint k's axis crossed with the
/// lever arm from the joint origin to the end-effector point.
pub fn bias_jacobian(chain: &KinematicChain, joints: &JointState) -> Result<Matrix3xX<f64>> {
    let frames = chain.joint_frames(joints)?;
    let p = frames[chain.dof()].translation;
    let mut jac = Matrix3xX::zeros(chain.dof());
    for (k, frame) in frames.iter().take(chain.dof()).enumerate() {
        let axis = frame.rotation.column(2).into_owned();
        jac.set_column(k, &axis.cross(&(p - frame.translation)));
    }
    Ok(jac)
}
