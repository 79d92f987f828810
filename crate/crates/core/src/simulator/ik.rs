use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, JointState, KinematicChain};
use crate::se3::normalize_angle;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: usize,
    /// Required end-effector position accuracy (m).
    pub position_tolerance: f64,
    /// Allowed angle between the tool axis and the approach direction (deg).
    pub alignment_tolerance_deg: f64,
    /// Fail when alignment is out of tolerance; otherwise alignment is best effort.
    pub require_alignment: bool,
    /// Joints held at their seed value.
    pub locked_joints: Vec<usize>,
    /// Largest joint change per iteration (rad).
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iterations: 200,
            position_tolerance: 1e-6,
            alignment_tolerance_deg: 1.0,
            require_alignment: true,
            locked_joints: Vec::new(),
            max_step: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution {
    pub joints: JointState,
    pub iterations: usize,
    pub position_error: f64,
    pub alignment_deg: f64,
}

/// `J^T (J J^T + l^2 I)^-1`.
fn damped_pinv(j: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let jjt = j * j.transpose() + DMatrix::identity(j.nrows(), j.nrows()) * (damping * damping);
    let inv = jjt.cholesky().expect("damped Gram matrix is positive definite").inverse();
    j.transpose() * inv
}

/// Damped least-squares IK placing the end effector at `target` with its
/// z-axis along `-approach_normal`.
///
/// Position is the primary task; alignment is pursued in the position task's
/// (damped) null space.
pub fn solve_ik(
    chain: &KinematicChain,
    target: &Vec3,
    approach_normal: &Vec3,
    seed: &JointState,
    cfg: &IkConfig,
) -> Result<IkSolution> {
    let k = chain.dof();
    if seed.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: seed.len(),
            record: None,
        });
    }
    if cfg.locked_joints.iter().any(|&j| j >= k) {
        return Err(Error::InvalidArgument("locked joint index out of range".into()));
    }
    let goal_axis = -approach_normal.normalize();
    let free: Vec<usize> = (0..k).filter(|j| !cfg.locked_joints.contains(j)).collect();
    // With three or fewer free joints there is no room left for alignment.
    let orient = free.len() > 3;
    let mut q = seed.clone();
    let mut iterations = 0;
    let (mut pos_err, mut align) = errors(chain, &q, target, &goal_axis)?;
    while iterations < cfg.max_iterations {
        if pos_err < cfg.position_tolerance && (!orient || align.to_degrees() <= cfg.alignment_tolerance_deg) {
            break;
        }
        iterations += 1;
        let ee = forward_kinematics(chain, &q)?;
        let z = ee.rotation.column(2).into_owned();
        let ep = target - ee.translation;
        let eo = z.cross(&goal_axis);
        let full = chain.geometric_jacobian(&q)?;
        let jp = DMatrix::from_fn(3, free.len(), |r, c| full[(r, free[c])]);
        let jo = DMatrix::from_fn(3, free.len(), |r, c| full[(r + 3, free[c])]);
        let ep = DVector::from_column_slice(ep.as_slice());
        let eo = DVector::from_column_slice(eo.as_slice());

        let jp_pinv = damped_pinv(&jp, cfg.damping);
        let dq1 = &jp_pinv * &ep;
        let null = DMatrix::identity(free.len(), free.len()) - &jp_pinv * &jp;
        let mut dq = dq1.clone();
        if orient {
            let jo_null = &jo * &null;
            dq += &null * (damped_pinv(&jo_null, cfg.damping) * (eo - &jo * &dq1));
        }
        let big = dq.amax();
        if big > cfg.max_step {
            dq *= cfg.max_step / big;
        }
        for (c, &j) in free.iter().enumerate() {
            q.angles_mut()[j] += dq[c];
        }
        (pos_err, align) = errors(chain, &q, target, &goal_axis)?;
    }
    for a in q.angles_mut() {
        *a = normalize_angle(*a);
    }
    let alignment_deg = align.to_degrees();
    let aligned = !cfg.require_alignment || alignment_deg <= cfg.alignment_tolerance_deg;
    if pos_err >= cfg.position_tolerance || !aligned {
        return Err(Error::IkFailure {
            position_error: pos_err,
            alignment_deg,
        });
    }
    Ok(IkSolution {
        joints: q,
        iterations,
        position_error: pos_err,
        alignment_deg,
    })
}

fn errors(chain: &KinematicChain, q: &JointState, target: &Vec3, goal_axis: &Vec3) -> Result<(f64, f64)> {
    let ee = forward_kinematics(chain, q)?;
    let z = ee.rotation.column(2).into_owned();
    Ok(((target - ee.translation).norm(), z.dot(goal_axis).clamp(-1.0, 1.0).acos()))
}
