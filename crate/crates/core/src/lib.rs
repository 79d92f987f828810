//! Contact-based self-calibration of a manipulator and a fixed depth sensor.
//!
//! The manipulator touches surfaces in its workspace and records a sparse
//! *contact map* (end-effector positions in the base frame, from forward
//! kinematics). The depth sensor sees the same surfaces as a dense cloud in
//! its own optical frame. Registering the two with point-to-plane ICP yields
//! the base-to-camera transform; adding joint-angle biases to the unknowns
//! turns the problem into a non-rigid registration solved with
//! Levenberg-Marquardt.
//!
//! # Modules
//!
//! - [`se3`]: rigid transforms, roll-pitch-yaw parameters, twist increments
//! - [`kinematics`]: DH forward kinematics, contact points, bias Jacobians
//! - [`pointcloud`]: clouds, exact kd-tree, normal estimation, PLY/CSV I/O
//! - [`registration`]: rigid point-to-plane ICP
//! - [`stability`]: approximate-Hessian spectrum and condition number
//! - [`calibration`]: joint extrinsic + joint-bias solve, identifiability
//! - [`simulator`]: synthetic scenes, depth scans, contact rasters, IK
//! - [`study`]: registration error as the contact map is downsampled
//!
//! # Conventions
//!
//! - `T_CB` maps base-frame points into the camera frame: `p_C = R p_B + t`.
//! - Euler angles are roll-pitch-yaw with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
//! - Increments are twists `(v, w)` left-composed in the camera frame.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod error;
pub mod kinematics;
pub mod pointcloud;
pub mod registration;
pub mod report;
pub mod se3;
pub mod simulator;
pub mod stability;
pub mod study;

pub use calibration::{
    augmented_residual_jacobian, calibrate, identifiability_report, CalibrationConfig,
    CalibrationParams, CalibrationProblem, CalibrationResult, IdentifiabilityReport,
};
pub use error::{Error, Result};
pub use kinematics::{
    bias_jacobian, build_contact_cloud, contact_point, dh_matrix, forward_kinematics,
    ContactRecord, DhRow, JointState, KinematicChain,
};
pub use pointcloud::{
    estimate_normals, random_downsample, read_cloud, write_cloud, Correspondence, NeighborIndex,
    PointCloud,
};
pub use registration::{
    find_correspondences, icp_step, point_to_plane_residual, register, residual_jacobian,
    IcpConfig, IcpResult,
};
pub use se3::{ExtrinsicParams, RigidTransform, TwistIncrement};
pub use stability::{analyze, assemble_hessian, compare_sampling, SamplingMask, StabilityReport};
pub use study::{downsample_study, CountRow};

/// 3-vector used for points, normals and translations.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix used for rotations and covariances.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// 6x6 matrix used for rigid approximate Hessians.
pub type Mat6 = nalgebra::Matrix6<f64>;
