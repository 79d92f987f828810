//! Joint solve for the extrinsic and the joint-angle biases.
//!
//! With biases in the model every contact point moves on its own when a bias
//! changes, so the registration is non-rigid. The unknowns are a left twist
//! on `T_CB` plus `K` additive joint offsets, solved by Levenberg-Marquardt
//! with correspondences re-paired after every accepted step.
//!
//! A bias on a base joint whose axis is the base z-axis is exactly offset by
//! rotating the camera about that axis; this gauge direction is always null.
//! It is reported rather than regularized; `pin_base_bias` fixes it to zero.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector6};
use rayon::prelude::*;

use crate::config::ConfigMap;
use crate::error::{Error, NullDirection, Result};
use crate::kinematics::{bias_jacobian, build_contact_cloud, JointState, KinematicChain};
use crate::pointcloud::{estimate_normals, Correspondence, NeighborIndex, PointCloud};
use crate::registration::{find_correspondences, jacobian_at, IcpConfig};
use crate::se3::{adjoint, ExtrinsicParams, RigidTransform, TwistIncrement};
use crate::stability::{self, RIGID_NAMES};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// Initial LM damping `mu` in `H + mu diag(H)`.
    pub damping_init: f64,
    /// Factor applied to `mu` after an accepted step.
    pub damping_decrease: f64,
    /// Factor applied to `mu` after a rejected step.
    pub damping_increase: f64,
    pub max_iterations: usize,
    /// Stop once the step norm falls below this.
    pub parameter_tolerance: f64,
    /// Consecutive rejected steps tolerated before giving up.
    pub max_rejections: usize,
    /// Augmented Hessians worse conditioned than this are degenerate.
    pub condition_threshold: f64,
    /// Augmented Hessians with `lambda_min < ratio * lambda_max` are degenerate.
    pub min_eigen_ratio: f64,
    /// Hold the base-joint bias at zero (removes the gauge direction).
    pub pin_base_bias: bool,
    /// Pairing, trimming and normal estimation settings.
    pub icp: IcpConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            damping_init: 1e-3,
            damping_decrease: 0.3,
            damping_increase: 3.0,
            max_iterations: 100,
            parameter_tolerance: 1e-10,
            max_rejections: 20,
            condition_threshold: 1e10,
            min_eigen_ratio: 1e-12,
            pin_base_bias: false,
            icp: IcpConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub const KEYS: [&'static str; 9] = [
        "damping_init",
        "damping_decrease",
        "damping_increase",
        "lm_max_iterations",
        "parameter_tolerance",
        "max_rejections",
        "condition_threshold",
        "min_eigen_ratio",
        "pin_base_bias",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if !(self.damping_init > 0.0) {
            return bad("damping_init", "must be > 0");
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return bad("damping_decrease", "must be in (0, 1)");
        }
        if !(self.damping_increase > 1.0) {
            return bad("damping_increase", "must be > 1");
        }
        if self.max_iterations == 0 {
            return bad("lm_max_iterations", "must be >= 1");
        }
        if !(self.parameter_tolerance > 0.0) {
            return bad("parameter_tolerance", "must be > 0");
        }
        if !(self.condition_threshold > 1.0) {
            return bad("condition_threshold", "must be > 1");
        }
        if !(self.min_eigen_ratio >= 0.0) {
            return bad("min_eigen_ratio", "must be >= 0");
        }
        self.icp.validate()
    }

    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            damping_init: cfg.get_or("damping_init", d.damping_init)?,
            damping_decrease: cfg.get_or("damping_decrease", d.damping_decrease)?,
            damping_increase: cfg.get_or("damping_increase", d.damping_increase)?,
            max_iterations: cfg.get_or("lm_max_iterations", d.max_iterations)?,
            parameter_tolerance: cfg.get_or("parameter_tolerance", d.parameter_tolerance)?,
            max_rejections: cfg.get_or("max_rejections", d.max_rejections)?,
            condition_threshold: cfg.get_or("condition_threshold", d.condition_threshold)?,
            min_eigen_ratio: cfg.get_or("min_eigen_ratio", d.min_eigen_ratio)?,
            pin_base_bias: cfg.get_or("pin_base_bias", d.pin_base_bias)?,
            icp: IcpConfig::from_config(cfg)?,
        };
        out.validate()?;
        Ok(out)
    }
}

/// A point in the `6 + K` parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationParams {
    pub transform: RigidTransform,
    /// Joint-angle offsets (rad).
    pub biases: Vec<f64>,
}

impl CalibrationParams {
    pub fn new(transform: RigidTransform, biases: Vec<f64>) -> Self {
        Self { transform, biases }
    }

    pub fn extrinsic(&self) -> Result<ExtrinsicParams> {
        ExtrinsicParams::from_transform(&self.transform)
    }

    /// Left twist on the transform plus additive bias update. `step` is `[v w dtheta]`.
    fn updated(&self, step: &DVector<f64>, cols: &Columns) -> Self {
        let d = TwistIncrement::from_vector(&Vector6::from_iterator(step.iter().take(6).copied()));
        let mut biases = self.biases.clone();
        for (c, &k) in cols.bias.iter().enumerate() {
            biases[k] += step[6 + c];
        }
        Self {
            transform: self.transform.apply_increment(&d).renormalized(),
            biases,
        }
    }
}

/// Which bias columns are active.
#[derive(Clone, Debug)]
struct Columns {
    bias: Vec<usize>,
}

impl Columns {
    fn new(k: usize, solve_biases: bool, pin_base: bool) -> Self {
        let bias = if !solve_biases {
            Vec::new()
        } else if pin_base {
            (1..k).collect()
        } else {
            (0..k).collect()
        };
        Self { bias }
    }

    fn len(&self) -> usize {
        6 + self.bias.len()
    }

    fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = RIGID_NAMES.iter().map(|s| s.to_string()).collect();
        v.extend(self.bias.iter().map(|k| format!("dtheta_{}", k + 1)));
        v
    }
}

/// Nominal chain, recorded joint angles and the depth scan.
#[derive(Clone, Debug)]
pub struct CalibrationProblem {
    chain: KinematicChain,
    joint_logs: Vec<JointState>,
    depth: PointCloud,
    index: NeighborIndex,
    pub initial_extrinsic: ExtrinsicParams,
    pub solve_biases: bool,
    pub config: CalibrationConfig,
}

impl CalibrationProblem {
    /// Missing depth normals are estimated (sensor at the camera origin) when `config.icp.normal_k >= 3`.
    pub fn new(
        chain: &KinematicChain,
        joint_logs: Vec<JointState>,
        depth: PointCloud,
        initial_extrinsic: ExtrinsicParams,
        solve_biases: bool,
        config: CalibrationConfig,
    ) -> Result<Self> {
        config.validate()?;
        if joint_logs.is_empty() {
            return Err(Error::InvalidArgument("no joint logs".into()));
        }
        for (i, q) in joint_logs.iter().enumerate() {
            if q.len() != chain.dof() {
                return Err(Error::DimensionMismatch {
                    expected: chain.dof(),
                    found: q.len(),
                    record: Some(i),
                });
            }
        }
        let depth = match depth.normals() {
            Some(_) => depth,
            None if config.icp.normal_k >= 3 => estimate_normals(&depth, config.icp.normal_k, &Vec3::zeros())?,
            None => return Err(Error::MissingNormals),
        };
        let index = NeighborIndex::build_active(&depth)?;
        Ok(Self {
            chain: chain.nominal(),
            joint_logs,
            depth,
            index,
            initial_extrinsic,
            solve_biases,
            config,
        })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn joint_logs(&self) -> &[JointState] {
        &self.joint_logs
    }

    pub fn depth(&self) -> &PointCloud {
        &self.depth
    }

    pub fn initial_params(&self) -> CalibrationParams {
        CalibrationParams::new(self.initial_extrinsic.to_transform(), vec![0.0; self.chain.dof()])
    }

    /// Contact map under the given biases.
    pub fn contact_cloud(&self, biases: &[f64]) -> Result<PointCloud> {
        build_contact_cloud(&self.chain.with_biases(biases)?, &self.joint_logs)
    }

    fn pair(&self, params: &CalibrationParams) -> Result<(PointCloud, Vec<Correspondence>)> {
        let contact = self.contact_cloud(&params.biases)?;
        let corrs = find_correspondences(&contact, &self.depth, &self.index, &params.transform, &self.config.icp)?;
        Ok((contact, corrs))
    }

    fn columns(&self, solve_biases: bool) -> Columns {
        Columns::new(self.chain.dof(), solve_biases, self.config.pin_base_bias)
    }
}

/// One weighted pair of the augmented problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedRow {
    pub source_index: usize,
    pub target_index: usize,
    pub weight: f64,
    pub residual: f64,
    /// `[-n^T, -((T p) x n)^T, -n^T R B]`: the rigid row followed by all K bias columns.
    pub jacobian: DVector<f64>,
}

fn rows_for(
    problem: &CalibrationProblem,
    params: &CalibrationParams,
    contact: &PointCloud,
    corrs: &[Correspondence],
) -> Result<Vec<AugmentedRow>> {
    let chain = problem.chain.with_biases(&params.biases)?;
    let t = &params.transform;
    let k = chain.dof();
    corrs
        .par_iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| {
            let q = t.apply_to_point(&contact.points()[c.source_index]);
            let n = &c.normal;
            let residual = n.dot(&(q - problem.depth.points()[c.target_index]));
            let b = bias_jacobian(&chain, &problem.joint_logs[c.source_index])?;
            let rn = t.rotation.transpose() * n;
            let mut jac = DVector::zeros(6 + k);
            jac.rows_mut(0, 6).copy_from(&jacobian_at(&q, n).transpose());
            for j in 0..k {
                jac[6 + j] = -rn.dot(&b.column(j));
            }
            Ok(AugmentedRow {
                source_index: c.source_index,
                target_index: c.target_index,
                weight: c.weight,
                residual,
                jacobian: jac,
            })
        })
        .collect()
}

/// Residuals and `(6 + K)` Jacobian rows for the active pairs at `params`.
pub fn augmented_residual_jacobian(
    problem: &CalibrationProblem,
    params: &CalibrationParams,
) -> Result<Vec<AugmentedRow>> {
    let (contact, corrs) = problem.pair(params)?;
    rows_for(problem, params, &contact, &corrs)
}

/// `(H, g, cost)` restricted to the active columns, summed in pair order.
fn normal_equations(rows: &[AugmentedRow], cols: &Columns) -> (DMatrix<f64>, DVector<f64>, f64) {
    let m = cols.len();
    let mut h = DMatrix::zeros(m, m);
    let mut g = DVector::zeros(m);
    let mut cost = 0.0;
    let mut j = DVector::zeros(m);
    for r in rows {
        j.rows_mut(0, 6).copy_from(&r.jacobian.rows(0, 6));
        for (c, &k) in cols.bias.iter().enumerate() {
            j[6 + c] = r.jacobian[6 + k];
        }
        h.syger(r.weight, &j, &j, 1.0);
        g.axpy(r.weight * r.residual, &j, 1.0);
        cost += r.weight * r.residual * r.residual;
    }
    h.fill_upper_triangle_with_lower_triangle();
    (h, g, cost)
}

/// Cost at `params` keeping the pairing indices of `corrs` (contact points still move with the biases).
fn fixed_pair_cost(problem: &CalibrationProblem, params: &CalibrationParams, corrs: &[Correspondence]) -> Result<f64> {
    let contact = problem.contact_cloud(&params.biases)?;
    Ok(corrs
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| {
            let r = c
                .normal
                .dot(&(params.transform.apply_to_point(&contact.points()[c.source_index]) - problem.depth.points()[c.target_index]));
            c.weight * r * r
        })
        .sum())
}

/// Spectrum summary of a symmetric PSD matrix.
#[derive(Clone, Debug)]
struct Spectrum {
    values: Vec<f64>,
    vectors: Vec<DVector<f64>>,
}

impl Spectrum {
    fn new(h: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..h.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        Self {
            values: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
            vectors: order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect(),
        }
    }

    fn max(&self) -> f64 {
        self.values[0]
    }

    fn min(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn condition(&self) -> f64 {
        if self.min() > 0.0 {
            self.max() / self.min()
        } else {
            f64::INFINITY
        }
    }

    fn rank(&self, rel: f64) -> usize {
        self.values.iter().filter(|&&l| l > rel * self.max()).count()
    }
}

/// Why a bias solve was not trusted.
#[derive(Clone, Debug)]
pub struct CalibrationDegeneracy {
    pub determinant: f64,
    pub condition_number: f64,
    /// `lambda_min / lambda_max`.
    pub eigen_ratio: f64,
    pub null_directions: Vec<NullDirection>,
    /// Biases the unconstrained solve arrived at (rad), for diagnosis only.
    pub rejected_biases: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    pub extrinsic: ExtrinsicParams,
    pub transform: RigidTransform,
    /// Joint offsets (rad); zero when the bias solve was rejected or not requested.
    pub joint_biases: Vec<f64>,
    pub final_cost: f64,
    /// Hessian over the solved columns at the solution the biases came from.
    pub augmented_hessian: DMatrix<f64>,
    /// Names of the rows/columns of `augmented_hessian`.
    pub parameter_names: Vec<String>,
    pub degeneracy: Option<CalibrationDegeneracy>,
    /// Cost after each re-pairing, starting from the initial guess.
    pub history: Vec<f64>,
    /// `(before, after)` fixed-pairing cost of every accepted step.
    pub inner_history: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub correspondences_used: usize,
}

impl CalibrationResult {
    pub fn is_degenerate(&self) -> bool {
        self.degeneracy.is_some()
    }
}

/// Relative cost change treated as rounding noise.
const ROUNDOFF: f64 = 1e-12;

struct LmOutcome {
    params: CalibrationParams,
    hessian: DMatrix<f64>,
    cost: f64,
    history: Vec<f64>,
    inner: Vec<(f64, f64)>,
    iterations: usize,
    converged: bool,
    used: usize,
}

fn levenberg_marquardt(problem: &CalibrationProblem, start: CalibrationParams, cols: &Columns) -> Result<LmOutcome> {
    let cfg = &problem.config;
    let mut params = start;
    let (mut contact, mut corrs) = problem.pair(&params)?;
    let mut rows = rows_for(problem, &params, &contact, &corrs)?;
    if rows.len() < cols.len() {
        return Err(Error::InsufficientCorrespondences { active: rows.len() });
    }
    let (mut h, mut g, mut cost) = normal_equations(&rows, cols);
    let rigid = stability::analyze(&h.fixed_view::<6, 6>(0, 0).into_owned(), stability::RANK_TOLERANCE)?;
    if rigid.numeric_rank < 6 {
        return Err(Error::DegenerateProblem {
            rank: rigid.numeric_rank,
            labels: rigid.null_directions.iter().map(|d| d.label.clone()).collect(),
        });
    }
    let mut history = vec![cost];
    let mut inner = Vec::new();
    let mut mu = cfg.damping_init;
    let mut rejections = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut damped = h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += mu * h[(i, i)].max(1e-300);
        }
        let Some(chol) = damped.cholesky() else {
            mu *= cfg.damping_increase;
            rejections += 1;
            if rejections > cfg.max_rejections {
                return Err(Error::NonDecreasingCost { rejections });
            }
            continue;
        };
        let step = chol.solve(&g);
        let step_norm = step.norm();
        if step_norm < cfg.parameter_tolerance {
            converged = true;
            break;
        }
        let cand = params.updated(&step, cols);
        let cand_cost = fixed_pair_cost(problem, &cand, &corrs)?;
        if cand_cost < cost || cand_cost == 0.0 {
            inner.push((cost, cand_cost));
            params = cand;
            mu *= cfg.damping_decrease;
            rejections = 0;
            (contact, corrs) = problem.pair(&params)?;
            rows = rows_for(problem, &params, &contact, &corrs)?;
            (h, g, cost) = normal_equations(&rows, cols);
            history.push(cost);
        } else {
            // Nothing left to gain beyond rounding.
            let predicted = 2.0 * step.dot(&g) - (step.transpose() * &h * &step)[(0, 0)];
            if predicted <= ROUNDOFF * cost {
                converged = true;
                break;
            }
            mu *= cfg.damping_increase;
            rejections += 1;
            if rejections > cfg.max_rejections {
                return Err(Error::NonDecreasingCost { rejections });
            }
        }
    }
    Ok(LmOutcome {
        params,
        hessian: h,
        cost,
        history,
        inner,
        iterations,
        converged,
        used: rows.len(),
    })
}

/// Levenberg-Marquardt on the extrinsic and (when `solve_biases`) the joint biases.
///
/// A bias solve whose augmented Hessian fails the spectrum gate comes back
/// with `degeneracy` set and the rigid-only solution in place of the biases.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    let cols = problem.columns(problem.solve_biases);
    let rigid_cols = problem.columns(false);
    // The bias solve starts from the rigid solution: from a hand-measured
    // guess the biases otherwise soak up the gross misalignment.
    let rigid_out = levenberg_marquardt(problem, problem.initial_params(), &rigid_cols)?;
    if !problem.solve_biases {
        return finish(rigid_out, cols.names(), None);
    }
    let start = rigid_out.params.clone();
    let out = levenberg_marquardt(problem, start, &cols)?;
    let spec = Spectrum::new(&out.hessian);
    let ratio = spec.min() / spec.max();
    if spec.condition() <= problem.config.condition_threshold && ratio >= problem.config.min_eigen_ratio {
        return finish(out, cols.names(), None);
    }
    let rank = spec.rank(problem.config.min_eigen_ratio.max(1.0 / problem.config.condition_threshold));
    let null: Vec<DVector<f64>> = spec.vectors[rank..].to_vec();
    let null = if null.is_empty() { vec![spec.vectors.last().unwrap().clone()] } else { null };
    let degeneracy = CalibrationDegeneracy {
        determinant: out.hessian.determinant(),
        condition_number: spec.condition(),
        eigen_ratio: ratio,
        null_directions: label_parameter_space(&null, &out.params.transform, &cols),
        rejected_biases: out.params.biases.clone(),
    };
    let mut fallback = rigid_out;
    fallback.hessian = out.hessian;
    finish(fallback, cols.names(), Some(degeneracy))
}

fn finish(
    final_out: LmOutcome,
    names: Vec<String>,
    degeneracy: Option<CalibrationDegeneracy>,
) -> Result<CalibrationResult> {
    Ok(CalibrationResult {
        extrinsic: final_out.params.extrinsic()?,
        transform: final_out.params.transform.clone(),
        joint_biases: final_out.params.biases.clone(),
        final_cost: final_out.cost,
        augmented_hessian: final_out.hessian,
        parameter_names: names,
        degeneracy,
        history: final_out.history,
        inner_history: final_out.inner,
        iterations: final_out.iterations,
        converged: final_out.converged,
        correspondences_used: final_out.used,
    })
}

/// Spectrum of the full `(6 + K)` Hessian, pinned or not.
#[derive(Clone, Debug)]
pub struct IdentifiabilityReport {
    /// Twist coordinates then `dtheta_k`.
    pub parameter_names: Vec<String>,
    pub hessian: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
    pub numeric_rank: usize,
    pub condition_number: f64,
    pub determinant: f64,
    /// Near-null directions in extrinsic-Euler and bias coordinates.
    pub null_directions: Vec<NullDirection>,
}

impl IdentifiabilityReport {
    /// `v^T H v / (|v|^2 lambda_max)`.
    pub fn relative_curvature(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.hessian * v)[(0, 0)] / (v.norm_squared() * self.eigenvalues[0])
    }
}

/// Eigen-structure of the augmented Hessian over all `6 + K` parameters at `params`.
///
/// `rank_tolerance` is relative to the largest eigenvalue.
pub fn identifiability_report(
    problem: &CalibrationProblem,
    params: &CalibrationParams,
    rank_tolerance: f64,
) -> Result<IdentifiabilityReport> {
    let cols = Columns::new(problem.chain.dof(), true, false);
    let rows = augmented_residual_jacobian(problem, params)?;
    if rows.is_empty() {
        return Err(Error::NoActivePairs);
    }
    let (h, _, _) = normal_equations(&rows, &cols);
    let spec = Spectrum::new(&h);
    let rank = spec.rank(rank_tolerance);
    let null = label_parameter_space(&spec.vectors[rank..], &params.transform, &cols);
    Ok(IdentifiabilityReport {
        parameter_names: cols.names(),
        determinant: h.determinant(),
        condition_number: if rank == h.nrows() { spec.condition() } else { f64::INFINITY },
        numeric_rank: rank,
        eigenvalues: spec.values,
        eigenvectors: spec.vectors,
        hessian: h,
        null_directions: null,
    })
}

/// Parameter-space direction that leaves every residual unchanged:
/// `dtheta_1 = +1` with the camera turned back about the base z-axis.
pub fn gauge_direction(params: &CalibrationParams) -> DVector<f64> {
    let xi = adjoint(&params.transform, &TwistIncrement::new(Vec3::zeros(), -Vec3::z()));
    let mut v = DVector::zeros(6 + params.biases.len());
    v.rows_mut(0, 6).copy_from(&xi.to_vector());
    v[6] = 1.0;
    v
}

/// `d(euler) / d(twist)` at `t`, by central differences.
fn euler_jacobian(t: &RigidTransform) -> DMatrix<f64> {
    let h = 1e-6;
    let mut j = DMatrix::zeros(6, 6);
    for k in 0..6 {
        let mut e = Vector6::zeros();
        e[k] = h;
        let plus = ExtrinsicParams::from_transform(&t.apply_increment(&TwistIncrement::from_vector(&e)));
        let minus = ExtrinsicParams::from_transform(&t.apply_increment(&TwistIncrement::from_vector(&-e)));
        if let (Ok(p), Ok(m)) = (plus, minus) {
            let (p, m) = (p.to_array(), m.to_array());
            for r in 0..6 {
                let mut d = p[r] - m[r];
                if r >= 3 {
                    d = crate::se3::normalize_angle(d);
                }
                j[(r, k)] = d / (2.0 * h);
            }
        }
    }
    j
}

const EULER_NAMES: [&str; 6] = ["x_e", "y_e", "z_e", "roll_e", "pitch_e", "yaw_e"];

/// Map twist-space null vectors to Euler/bias coordinates and label them.
fn label_parameter_space(null: &[DVector<f64>], t: &RigidTransform, cols: &Columns) -> Vec<NullDirection> {
    if null.is_empty() {
        return Vec::new();
    }
    let m = cols.len();
    let ej = euler_jacobian(t);
    let mapped = DMatrix::from_fn(m, null.len(), |r, c| {
        if r < 6 {
            (0..6).map(|k| ej[(r, k)] * null[c][k]).sum()
        } else {
            null[c][r]
        }
    });
    let q = mapped.qr().q();
    let basis: Vec<Vec<f64>> = (0..null.len()).map(|c| q.column(c).iter().copied().collect()).collect();
    let mut names: Vec<String> = EULER_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(cols.bias.iter().map(|k| format!("dtheta_{}", k + 1)));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    stability::label_null_space(&basis, &name_refs)
        .into_iter()
        .map(|d| {
            if d.label.starts_with("mixed(") {
                NullDirection {
                    label: trade_off_label(&d.vector, &name_refs),
                    vector: d.vector,
                }
            } else {
                d
            }
        })
        .collect()
}

fn trade_off_label(v: &[f64], names: &[&str]) -> String {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pick = |range: std::ops::Range<usize>| -> Vec<&str> {
        range.filter(|&i| v[i].abs() >= 0.2 * max).map(|i| names[i]).collect()
    };
    let ext = pick(0..6.min(v.len()));
    let bias = pick(6.min(v.len())..v.len());
    match (ext.is_empty(), bias.is_empty()) {
        (false, false) => format!("{} vs {} trade-off", ext.join("/"), bias.join("/")),
        (true, false) => format!("{} trade-off", bias.join("/")),
        _ => format!("{} trade-off", ext.join("/")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::contact_point;
    use crate::simulator::{
        generate_dataset, trial_extrinsic_params, ContactScanConfig, DepthScanConfig, MotionConfig, Scene,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(biases: &[f64], motion: MotionConfig) -> (crate::simulator::Dataset, KinematicChain) {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let mut contact = ContactScanConfig::new(
            vec![
                "table_top".into(),
                "big_top".into(),
                "big_py".into(),
                "big_nx".into(),
                "small_top".into(),
                "small_nx".into(),
                "small_py".into(),
            ],
            0.05,
            2,
        );
        contact.contact_noise_sigma = 0.0;
        let chain = KinematicChain::generic_six_dof();
        let d = generate_dataset(
            &scene,
            &DepthScanConfig::new(trial_extrinsic_params().to_transform(), 20_000.0, 1),
            &contact,
            &chain,
            &trial_extrinsic_params(),
            biases,
            &motion,
        )
        .unwrap();
        (d, chain)
    }

    fn problem(biases: &[f64], solve: bool, pin: bool) -> CalibrationProblem {
        let (d, chain) = dataset(biases, MotionConfig::varied(5));
        let cfg = CalibrationConfig {
            pin_base_bias: pin,
            ..Default::default()
        };
        CalibrationProblem::new(&chain, d.joint_logs, d.depth, trial_extrinsic_params(), solve, cfg).unwrap()
    }

    #[test]
    fn bias_columns_match_finite_differences() {
        let p = problem(&[0.0; 6], true, false);
        let params = p.initial_params();
        let rows = augmented_residual_jacobian(&p, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let r = &rows[rng.random_range(0..rows.len())];
            let n = p.depth().normals().unwrap()[r.target_index];
            let b = p.depth().points()[r.target_index];
            let q = &p.joint_logs()[r.source_index];
            for k in 0..6 {
                let mut d = vec![0.0; 6];
                d[k] = h;
                let plus = contact_point(&p.chain().with_biases(&d).unwrap(), q).unwrap();
                d[k] = -h;
                let minus = contact_point(&p.chain().with_biases(&d).unwrap(), q).unwrap();
                let rp = n.dot(&(params.transform.apply_to_point(&plus) - b));
                let rm = n.dot(&(params.transform.apply_to_point(&minus) - b));
                worst = worst.max(((rp - rm) / (2.0 * h) + r.jacobian[6 + k]).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn rigid_block_matches_registration_jacobian() {
        let p = problem(&[0.0; 6], true, false);
        let params = p.initial_params();
        let contact = p.contact_cloud(&params.biases).unwrap();
        for r in augmented_residual_jacobian(&p, &params).unwrap().iter().take(50) {
            let j = crate::registration::residual_jacobian(
                &params.transform,
                &contact.points()[r.source_index],
                &p.depth().normals().unwrap()[r.target_index],
            );
            for k in 0..6 {
                assert_eq!(j[k], r.jacobian[k]);
            }
        }
    }

    #[test]
    fn gauge_direction_is_null() {
        let p = problem(&[0.0; 6], true, false);
        let params = p.initial_params();
        let rep = identifiability_report(&p, &params, 1e-12).unwrap();
        let g = gauge_direction(&params);
        assert!(rep.relative_curvature(&g) < 1e-6);
        assert!(rep.numeric_rank < 12);
        let label = &rep.null_directions[0].label;
        assert!(label.contains("dtheta_1") && label.contains(" vs "), "{label}");
    }

    #[test]
    fn zero_biases_match_rigid_solution() {
        let p = problem(&[0.0; 6], true, true);
        let res = calibrate(&p).unwrap();
        assert!(res.degeneracy.is_none(), "{:?}", res.degeneracy);
        for b in &res.joint_biases {
            assert!(b.abs().to_degrees() < 0.02);
        }
        let (rot, trans) = res.transform.distance_to(&trial_extrinsic_params().to_transform());
        assert!(trans < 1e-3 && rot < 1e-4, "{trans} {rot}");
        for (before, after) in &res.inner_history {
            assert!(after <= before);
        }
    }

    #[test]
    fn unpinned_bias_solve_is_degenerate() {
        let p = problem(&[0.0; 6], true, false);
        let res = calibrate(&p).unwrap();
        let d = res.degeneracy.as_ref().expect("gauge direction should trip the gate");
        assert!(d.null_directions.iter().any(|n| n.label.contains("dtheta_1")));
        assert!(res.joint_biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn config_keys() {
        let c = ConfigMap::parse("lm_max_iterations = 7\npin_base_bias = true\ntrim_ratio = 0.2\n", std::path::Path::new("c"))
            .unwrap();
        let cfg = CalibrationConfig::from_config(&c).unwrap();
        assert_eq!(cfg.max_iterations, 7);
        assert!(cfg.pin_base_bias);
        assert_eq!(cfg.icp.trim_ratio, 0.2);
    }
}
