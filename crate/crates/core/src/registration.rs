//! Rigid point-to-plane ICP.
//!
//! The contact map (source, base frame) is paired with the depth map (target,
//! camera frame) by nearest neighbor under the current `T_CB`. Each residual
//! is `r = n^T (T a - b)` with row Jacobian `J = [-n^T, -((T a) x n)^T]`, so a
//! left twist `d` changes the residual to first order as `r - J d`. The step
//! solves `(sum w J^T J) d = sum w J^T r`.

use nalgebra::{RowVector6, SymmetricEigen, Vector6};
use rayon::prelude::*;

use crate::config::ConfigMap;
use crate::error::{Degeneracy, Error, Result};
use crate::pointcloud::{estimate_normals, Correspondence, NeighborIndex, PointCloud};
use crate::se3::{RigidTransform, TwistIncrement};
use crate::stability::{self, RIGID_NAMES};
use crate::{Mat6, Vec3};

/// Eigenvalues below this fraction of the largest are treated as null in the ICP step.
pub const STEP_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the step's translation norm (m).
    pub translation_tolerance: f64,
    /// Convergence threshold on the step's rotation norm (rad).
    pub rotation_tolerance: f64,
    /// Pairs farther apart than this (m) are dropped.
    pub max_correspondence_distance: f64,
    /// Fraction of the longest remaining pairs weighted out each iteration.
    pub trim_ratio: f64,
    /// Neighbors for on-the-fly depth normals; 0 requires normals on input.
    pub normal_k: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            translation_tolerance: 1e-7,
            rotation_tolerance: 1e-7,
            max_correspondence_distance: 0.5,
            trim_ratio: 0.10,
            normal_k: 12,
        }
    }
}

impl IcpConfig {
    pub const KEYS: [&'static str; 6] = [
        "max_iterations",
        "translation_tolerance",
        "rotation_tolerance",
        "max_correspondence_distance",
        "trim_ratio",
        "normal_k",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be >= 1");
        }
        if !(self.translation_tolerance > 0.0) {
            return bad("translation_tolerance", "must be > 0");
        }
        if !(self.rotation_tolerance > 0.0) {
            return bad("rotation_tolerance", "must be > 0");
        }
        if !(self.max_correspondence_distance > 0.0) {
            return bad("max_correspondence_distance", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.trim_ratio) {
            return bad("trim_ratio", "must be in [0, 1)");
        }
        if self.normal_k != 0 && self.normal_k < 3 {
            return bad("normal_k", "must be 0 or >= 3");
        }
        Ok(())
    }

    /// Read the ICP keys from a config map; absent keys keep their defaults.
    pub fn from_config(cfg: &ConfigMap) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            max_iterations: cfg.get_or("max_iterations", d.max_iterations)?,
            translation_tolerance: cfg.get_or("translation_tolerance", d.translation_tolerance)?,
            rotation_tolerance: cfg.get_or("rotation_tolerance", d.rotation_tolerance)?,
            max_correspondence_distance: cfg
                .get_or("max_correspondence_distance", d.max_correspondence_distance)?,
            trim_ratio: cfg.get_or("trim_ratio", d.trim_ratio)?,
            normal_k: cfg.get_or("normal_k", d.normal_k)?,
        };
        out.validate()?;
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Weighted point-to-plane cost at the final iterate (m^2).
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Weight-1 pairs at the final iterate.
    pub correspondences_used: usize,
    /// `sum J^T J` over weight-1 pairs at the final iterate.
    pub hessian: Mat6,
    /// Same pairs with lever arms from their centroid.
    pub centered_hessian: Mat6,
    /// Set when the final normal equations are rank deficient.
    pub degeneracy: Option<Degeneracy>,
    /// Cost at the start of each iteration, then the final cost.
    pub cost_history: Vec<f64>,
}

pub fn point_to_plane_residual(t: &RigidTransform, a: &Vec3, b: &Vec3, n: &Vec3) -> f64 {
    n.dot(&(t.apply_to_point(a) - b))
}

/// `[-n^T, -((T a) x n)^T]`. The lever arm is the point at the current iterate.
pub fn residual_jacobian(t: &RigidTransform, a: &Vec3, n: &Vec3) -> RowVector6<f64> {
    jacobian_at(&t.apply_to_point(a), n)
}

pub(crate) fn jacobian_at(p: &Vec3, n: &Vec3) -> RowVector6<f64> {
    let c = p.cross(n);
    RowVector6::new(-n.x, -n.y, -n.z, -c.x, -c.y, -c.z)
}

/// Pair every active contact point with its nearest depth point under `t`.
///
/// Pairs beyond `max_correspondence_distance` are dropped. Of the rest, pairs
/// strictly longer than the `(1 - trim_ratio)` distance quantile get weight 0.
pub fn find_correspondences(
    contact: &PointCloud,
    depth: &PointCloud,
    index: &NeighborIndex,
    t: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<Vec<Correspondence>> {
    let normals = depth.normals().ok_or(Error::MissingNormals)?;
    let weights = contact.weights();
    let mut pairs: Vec<Correspondence> = contact
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(i, a)| {
            if weights[i] <= 0.0 {
                return None;
            }
            let (j, d) = index.nearest(&t.apply_to_point(a));
            (d <= cfg.max_correspondence_distance).then(|| Correspondence {
                source_index: i,
                target_index: j,
                normal: normals[j],
                weight: 1.0,
                distance: d,
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    let trimmed = (cfg.trim_ratio * pairs.len() as f64).floor() as usize;
    if trimmed > 0 {
        let mut d: Vec<f64> = pairs.iter().map(|c| c.distance).collect();
        let keep = pairs.len() - trimmed;
        let (_, thr, _) = d.select_nth_unstable_by(keep - 1, f64::total_cmp);
        let thr = *thr;
        for c in &mut pairs {
            if c.distance > thr {
                c.weight = 0.0;
            }
        }
    }
    Ok(pairs)
}

/// Weighted residuals and Jacobians, accumulated in correspondence order.
pub(crate) fn normal_equations(
    corrs: &[Correspondence],
    t: &RigidTransform,
    contact: &PointCloud,
    depth: &PointCloud,
) -> (Mat6, Vector6<f64>, f64, usize) {
    let rows: Vec<(f64, f64, RowVector6<f64>)> = corrs
        .par_iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| {
            let p = t.apply_to_point(&contact.points()[c.source_index]);
            let r = c.normal.dot(&(p - depth.points()[c.target_index]));
            (c.weight, r, jacobian_at(&p, &c.normal))
        })
        .collect();
    let mut h = Mat6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for (w, r, j) in &rows {
        h += j.transpose() * j * *w;
        g += j.transpose() * (*w * *r);
        cost += w * r * r;
    }
    (h, g, cost, rows.len())
}

/// Weighted point-to-plane cost for fixed correspondences.
pub fn correspondence_cost(
    corrs: &[Correspondence],
    t: &RigidTransform,
    contact: &PointCloud,
    depth: &PointCloud,
) -> f64 {
    corrs
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| {
            let r = point_to_plane_residual(
                t,
                &contact.points()[c.source_index],
                &depth.points()[c.target_index],
                &c.normal,
            );
            c.weight * r * r
        })
        .sum()
}

/// Minimum-norm solution of `h x = g` over eigenvalues above `tol * lambda_max`.
/// Returns the solution, the numeric rank, and the null-space basis.
pub(crate) fn spectral_solve(h: &Mat6, g: &Vector6<f64>, tol: f64) -> (Vector6<f64>, usize, Vec<Vector6<f64>>) {
    let eig = SymmetricEigen::new(*h);
    let lmax = eig.eigenvalues.max();
    let mut x = Vector6::zeros();
    let mut rank = 0;
    let mut null = Vec::new();
    for k in 0..6 {
        let v: Vector6<f64> = eig.eigenvectors.column(k).into_owned();
        let l = eig.eigenvalues[k];
        if lmax > 0.0 && l > tol * lmax {
            x += v * (v.dot(g) / l);
            rank += 1;
        } else {
            null.push(v);
        }
    }
    (x, rank, null)
}

/// One Gauss-Newton step on the linearized point-to-plane cost.
pub fn icp_step(
    corrs: &[Correspondence],
    t: &RigidTransform,
    contact: &PointCloud,
    depth: &PointCloud,
) -> Result<TwistIncrement> {
    let (h, g, _, active) = normal_equations(corrs, t, contact, depth);
    if active < 6 {
        return Err(Error::InsufficientCorrespondences { active });
    }
    let (x, rank, null) = spectral_solve(&h, &g, STEP_RANK_TOLERANCE);
    if rank < 6 {
        let basis: Vec<Vec<f64>> = null.iter().map(|v| v.iter().copied().collect()).collect();
        return Err(Error::DegenerateNormalEquations(Box::new(Degeneracy {
            rank,
            null_directions: stability::label_null_space(&basis, &RIGID_NAMES),
            step: x.into(),
        })));
    }
    Ok(TwistIncrement::from_vector(&x))
}

/// Iterate pairing and Gauss-Newton steps until both step norms fall below tolerance.
pub fn register(
    contact: &PointCloud,
    depth: &PointCloud,
    initial: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    cfg.validate()?;
    let estimated;
    let depth = match depth.normals() {
        Some(_) => depth,
        None if cfg.normal_k >= 3 => {
            // Depth clouds live in the camera frame, so the sensor sits at the origin.
            estimated = estimate_normals(depth, cfg.normal_k, &Vec3::zeros())?;
            &estimated
        }
        None => return Err(Error::MissingNormals),
    };
    let index = NeighborIndex::build_active(depth)?;

    let mut t = initial.clone();
    let mut previous: Option<(RigidTransform, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut cost_history = Vec::new();
    for iter in 1..=cfg.max_iterations {
        iterations = iter;
        let corrs = find_correspondences(contact, depth, &index, &t, cfg)?;
        let cost = correspondence_cost(&corrs, &t, contact, depth);
        cost_history.push(cost);
        let d = match icp_step(&corrs, &t, contact, depth) {
            Ok(d) => d,
            Err(Error::DegenerateNormalEquations(deg)) => {
                TwistIncrement::from_vector(&Vector6::from(deg.step))
            }
            Err(e) => return Err(e),
        };
        let next = t.apply_increment(&d).renormalized();
        if d.translation.norm() < cfg.translation_tolerance && d.rotation.norm() < cfg.rotation_tolerance {
            t = next;
            converged = true;
            break;
        }
        // Two pairings that each step onto the other: settle on the cheaper one.
        if let Some((before, before_cost)) = &previous {
            let (rot, trans) = next.distance_to(before);
            if trans < cfg.translation_tolerance && rot < cfg.rotation_tolerance {
                if *before_cost < cost {
                    t = before.clone();
                }
                converged = true;
                break;
            }
        }
        previous = Some((t, cost));
        t = next;
    }

    let corrs = find_correspondences(contact, depth, &index, &t, cfg)?;
    let (hessian, g, final_cost, used) = normal_equations(&corrs, &t, contact, depth);
    cost_history.push(final_cost);
    let (x, rank, null) = spectral_solve(&hessian, &g, STEP_RANK_TOLERANCE);
    let degeneracy = (rank < 6).then(|| {
        let basis: Vec<Vec<f64>> = null.iter().map(|v| v.iter().copied().collect()).collect();
        Degeneracy {
            rank,
            null_directions: stability::label_null_space(&basis, &RIGID_NAMES),
            step: x.into(),
        }
    });
    let centered_hessian = stability::assemble_centered_hessian(&corrs, &t, contact)?;
    Ok(IcpResult {
        transform: t,
        final_cost,
        iterations,
        converged: converged && degeneracy.is_none(),
        correspondences_used: used,
        hessian,
        centered_hessian,
        degeneracy,
        cost_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::ExtrinsicParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, f: impl Fn(f64, f64) -> (Vec3, Vec3)) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut p = Vec::new();
        let mut q = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = f(i as f64 / n as f64, j as f64 / n as f64);
                p.push(a);
                q.push(b);
            }
        }
        (p, q)
    }

    /// Three orthogonal faces of a corner: floor z=0, walls x=0 and y=0.
    fn corner(n: usize) -> PointCloud {
        let (mut p, mut q) = grid(n, |u, v| (Vec3::new(0.05 + u, 0.05 + v, 0.0), Vec3::z()));
        let (p2, q2) = grid(n, |u, v| (Vec3::new(0.0, 0.05 + u, 0.05 + v), Vec3::x()));
        let (p3, q3) = grid(n, |u, v| (Vec3::new(0.05 + u, 0.0, 0.05 + v * 0.7), Vec3::y()));
        p.extend(p2);
        p.extend(p3);
        q.extend(q2);
        q.extend(q3);
        PointCloud::with_normals(p, q).unwrap()
    }

    fn camera() -> RigidTransform {
        ExtrinsicParams::from_degrees(0.2, -0.1, 1.5, 160.0, 10.0, 30.0).to_transform()
    }

    #[test]
    fn residual_examples() {
        let id = RigidTransform::identity();
        let z = Vec3::z();
        assert_eq!(point_to_plane_residual(&id, &z, &Vec3::zeros(), &z), 1.0);
        let a = Vec3::new(0.3, -0.2, 0.9);
        assert_eq!(point_to_plane_residual(&id, &a, &a, &Vec3::x()), 0.0);
        let t = RigidTransform::from_translation(Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(point_to_plane_residual(&t, &z, &Vec3::zeros(), &z), 0.0);
    }

    #[test]
    fn jacobian_examples() {
        let id = RigidTransform::identity();
        let j = residual_jacobian(&id, &Vec3::zeros(), &Vec3::z());
        assert_eq!(j, RowVector6::new(0.0, 0.0, -1.0, 0.0, 0.0, 0.0));
        let j = residual_jacobian(&id, &Vec3::x(), &Vec3::z());
        assert_eq!(j, RowVector6::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
    }

    // Central differences of r(Exp(h e_k) T) give -J.
    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-7;
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let t = ExtrinsicParams::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.4..1.4),
                rng.random_range(-3.0..3.0),
            )
            .to_transform();
            let a = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let j = residual_jacobian(&t, &a, &n);
            for k in 0..6 {
                let mut e = Vector6::zeros();
                e[k] = h;
                let rp = point_to_plane_residual(&t.apply_increment(&TwistIncrement::from_vector(&e)), &a, &b, &n);
                let rm = point_to_plane_residual(&t.apply_increment(&TwistIncrement::from_vector(&-e)), &a, &b, &n);
                worst = worst.max(((rp - rm) / (2.0 * h) + j[k]).abs());
            }
        }
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    fn icp_fixture(truth: &RigidTransform) -> (PointCloud, PointCloud) {
        let scene = corner(20);
        let depth = scene.transformed(truth);
        let contact = PointCloud::new(scene.points().iter().step_by(3).copied().collect());
        (contact, depth)
    }

    #[test]
    fn identical_clouds_pair_with_themselves() {
        let c = corner(10);
        let idx = NeighborIndex::build_active(&c).unwrap();
        let corrs = find_correspondences(&c.without_normals(), &c, &idx, &RigidTransform::identity(), &IcpConfig::default())
            .unwrap();
        assert_eq!(corrs.len(), c.len());
        for (i, k) in corrs.iter().enumerate() {
            assert_eq!((k.source_index, k.target_index, k.distance, k.weight), (i, i, 0.0, 1.0));
        }
    }

    #[test]
    fn ghosts_are_trimmed() {
        let depth = corner(10);
        let mut pts: Vec<Vec3> = depth.points().to_vec();
        let n_ghost = pts.len() / 10;
        for g in 0..n_ghost {
            pts.push(Vec3::new(2.0, 2.0, 2.0 + g as f64 * 0.001));
        }
        let contact = PointCloud::new(pts);
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let cfg = IcpConfig {
            trim_ratio: 0.15,
            max_correspondence_distance: 100.0,
            ..Default::default()
        };
        let corrs = find_correspondences(&contact, &depth, &idx, &RigidTransform::identity(), &cfg).unwrap();
        for c in &corrs {
            if c.source_index >= depth.len() {
                assert_eq!(c.weight, 0.0);
            }
        }
    }

    #[test]
    fn no_overlap_is_an_error() {
        let depth = corner(5);
        let contact = depth.without_normals().transformed(&RigidTransform::from_translation(Vec3::x() * 10.0));
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let cfg = IcpConfig {
            max_correspondence_distance: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            find_correspondences(&contact, &depth, &idx, &RigidTransform::identity(), &cfg),
            Err(Error::NoCorrespondences)
        ));
    }

    #[test]
    fn aligned_clouds_give_zero_step() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let cfg = IcpConfig::default();
        let corrs = find_correspondences(&contact, &depth, &idx, &truth, &cfg).unwrap();
        let d = icp_step(&corrs, &truth, &contact, &depth).unwrap();
        assert!(d.to_vector().amax() < 1e-12);
    }

    #[test]
    fn pure_translation_recovered_in_one_step() {
        let truth = RigidTransform::identity();
        let (contact, depth) = icp_fixture(&truth);
        let offset = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.01));
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let cfg = IcpConfig {
            trim_ratio: 0.0,
            ..Default::default()
        };
        let corrs = find_correspondences(&contact, &depth, &idx, &offset, &cfg).unwrap();
        let d = icp_step(&corrs, &offset, &contact, &depth).unwrap();
        let t = offset.apply_increment(&d);
        assert!(t.translation.norm() < 1e-6, "{:?}", t.translation);
        assert!(d.rotation.norm() < 1e-9);
    }

    #[test]
    fn single_plane_step_is_degenerate() {
        let (p, n) = grid(15, |u, v| (Vec3::new(u, v, 0.0), Vec3::z()));
        let depth = PointCloud::with_normals(p.clone(), n).unwrap();
        let contact = PointCloud::new(p);
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let corrs =
            find_correspondences(&contact, &depth, &idx, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        match icp_step(&corrs, &RigidTransform::identity(), &contact, &depth) {
            Err(Error::DegenerateNormalEquations(d)) => {
                assert_eq!(d.rank, 3);
                assert_eq!(d.null_directions.len(), 3);
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn too_few_pairs() {
        let depth = corner(3);
        let contact = PointCloud::new(depth.points()[..5].to_vec());
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let corrs =
            find_correspondences(&contact, &depth, &idx, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        assert!(matches!(
            icp_step(&corrs, &RigidTransform::identity(), &contact, &depth),
            Err(Error::InsufficientCorrespondences { active: 5 })
        ));
    }

    #[test]
    fn register_recovers_perturbed_transform() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let kick = TwistIncrement::new(Vec3::new(0.03, -0.02, 0.04), Vec3::new(0.05, -0.04, 0.06));
        let init = truth.apply_increment(&kick);
        let res = register(&contact, &depth, &init, &IcpConfig::default()).unwrap();
        assert!(res.converged, "{res:?}");
        let (rot, trans) = res.transform.distance_to(&truth);
        assert!(rot < 1e-6 && trans < 1e-6, "rot {rot} trans {trans}");
        assert!((res.hessian - res.hessian.transpose()).amax() < 1e-10);
    }

    #[test]
    fn register_from_truth_stops_fast() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let res = register(&contact, &depth, &truth, &IcpConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2);
        assert!(res.final_cost < 1e-20);
    }

    #[test]
    fn register_without_normals_estimates_them() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let res = register(&contact, &depth.without_normals(), &truth, &IcpConfig::default()).unwrap();
        assert!(res.converged);
        let cfg = IcpConfig {
            normal_k: 0,
            ..Default::default()
        };
        assert!(matches!(
            register(&contact, &depth.without_normals(), &truth, &cfg),
            Err(Error::MissingNormals)
        ));
    }

    #[test]
    fn fixed_correspondence_cost_does_not_increase() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let cfg = IcpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let kick = TwistIncrement::new(
                Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)),
                Vec3::new(rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03)),
            );
            let t = truth.apply_increment(&kick);
            let corrs = find_correspondences(&contact, &depth, &idx, &t, &cfg).unwrap();
            let before = correspondence_cost(&corrs, &t, &contact, &depth);
            let d = icp_step(&corrs, &t, &contact, &depth).unwrap();
            let after = correspondence_cost(&corrs, &t.apply_increment(&d), &contact, &depth);
            assert!(after <= before, "{after} > {before}");
        }
    }

    #[test]
    fn weight_zero_points_do_not_affect_step() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let idx = NeighborIndex::build_active(&depth).unwrap();
        let t = truth.apply_increment(&TwistIncrement::new(Vec3::new(0.01, 0.0, 0.0), Vec3::new(0.0, 0.01, 0.0)));
        let cfg = IcpConfig::default();
        let corrs = find_correspondences(&contact, &depth, &idx, &t, &cfg).unwrap();
        let kept: Vec<_> = corrs.iter().filter(|c| c.weight > 0.0).cloned().collect();
        assert!(kept.len() < corrs.len());
        let a = icp_step(&corrs, &t, &contact, &depth).unwrap();
        let b = icp_step(&kept, &t, &contact, &depth).unwrap();
        assert!((a.to_vector() - b.to_vector()).amax() <= 1e-12);
    }

    #[test]
    fn frame_invariance() {
        let truth = camera();
        let (contact, depth) = icp_fixture(&truth);
        let init = truth.apply_increment(&TwistIncrement::new(Vec3::new(0.02, 0.01, -0.02), Vec3::new(0.03, 0.02, -0.01)));
        let g = ExtrinsicParams::new(0.4, -1.0, 0.3, 0.2, -0.5, 1.0).to_transform();
        let hh = ExtrinsicParams::new(-0.2, 0.6, 0.1, -1.0, 0.3, 2.0).to_transform();
        let cfg = IcpConfig::default();
        let base = register(&contact, &depth, &init, &cfg).unwrap();
        let moved = register(
            &contact.transformed(&g),
            &depth.transformed(&hh),
            &hh.compose(&init).compose(&g.inverse()),
            &cfg,
        )
        .unwrap();
        let expect = hh.compose(&base.transform).compose(&g.inverse());
        assert!((moved.transform.rotation - expect.rotation).amax() < 1e-8);
        assert!((moved.transform.translation - expect.translation).amax() < 1e-8);
    }

    #[test]
    fn config_validation() {
        assert!(IcpConfig::default().validate().is_ok());
        for bad in [
            IcpConfig { max_iterations: 0, ..Default::default() },
            IcpConfig { trim_ratio: 1.0, ..Default::default() },
            IcpConfig { translation_tolerance: 0.0, ..Default::default() },
            IcpConfig { normal_k: 2, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
