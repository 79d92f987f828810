//! Observability of a registration from the spectrum of `Q = sum J^T J`.
//!
//! A small eigenvalue of `Q` means the cost barely changes along the matching
//! eigenvector, so that motion is poorly constrained by the data. The
//! condition number `c = lambda_1 / lambda_6` summarizes this; larger is worse.
//!
//! The rotation block depends on the origin of the lever arms. [`analyze`]
//! takes whatever `Q` it is given; [`hessian_from_pairs`] can recenter the
//! points on their centroid first, which makes `c` invariant to translating
//! the whole scene. Translation (m) and rotation (rad) blocks are not
//! otherwise balanced.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen, Vector6};

use crate::error::{Error, NullDirection, Result};
use crate::pointcloud::{random_downsample, Correspondence, PointCloud};
use crate::registration::jacobian_at;
use crate::se3::RigidTransform;
use crate::simulator::Scene;
use crate::{Mat6, Vec3};

/// Default relative eigenvalue floor for the numeric rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Names of the six rigid increment coordinates, in twist order `(v, w)`.
pub const RIGID_NAMES: [&str; 6] = [
    "translation x",
    "translation y",
    "translation z",
    "rotation about x",
    "rotation about y",
    "rotation about z",
];

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub hessian: Mat6,
    /// Descending.
    pub eigenvalues: [f64; 6],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [Vector6<f64>; 6],
    /// `lambda_1 / lambda_6`, infinite when the rank is below 6.
    pub condition_number: f64,
    pub numeric_rank: usize,
    pub null_directions: Vec<NullDirection>,
}

impl StabilityReport {
    pub fn is_full_rank(&self) -> bool {
        self.numeric_rank == 6
    }
}

/// `Q` over the weight-1 pairs, lever arms taken at `T a`.
pub fn assemble_hessian(
    corrs: &[Correspondence],
    t: &RigidTransform,
    contact: &PointCloud,
) -> Result<Mat6> {
    let (points, normals) = active_pairs(corrs, t, contact);
    if points.is_empty() {
        return Err(Error::NoActivePairs);
    }
    Ok(hessian_from_pairs(&points, &normals, None))
}

/// As [`assemble_hessian`], with lever arms measured from the centroid of the paired points.
pub fn assemble_centered_hessian(
    corrs: &[Correspondence],
    t: &RigidTransform,
    contact: &PointCloud,
) -> Result<Mat6> {
    let (points, normals) = active_pairs(corrs, t, contact);
    if points.is_empty() {
        return Err(Error::NoActivePairs);
    }
    let c = centroid(&points);
    Ok(hessian_from_pairs(&points, &normals, Some(c)))
}

fn active_pairs(corrs: &[Correspondence], t: &RigidTransform, contact: &PointCloud) -> (Vec<Vec3>, Vec<Vec3>) {
    corrs
        .iter()
        .filter(|c| c.weight == 1.0)
        .map(|c| (t.apply_to_point(&contact.points()[c.source_index]), c.normal))
        .unzip()
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// `sum J^T J` for camera-frame points and their target normals.
/// With `center`, lever arms are `p - center`.
pub fn hessian_from_pairs(points: &[Vec3], normals: &[Vec3], center: Option<Vec3>) -> Mat6 {
    let c = center.unwrap_or_else(Vec3::zeros);
    points.iter().zip(normals).fold(Mat6::zeros(), |acc, (p, n)| {
        let j = jacobian_at(&(p - c), n);
        acc + j.transpose() * j
    })
}

/// Eigen-decompose `Q` and label its near-null directions.
pub fn analyze(q: &Mat6, rank_tolerance: f64) -> Result<StabilityReport> {
    let scale = q.amax().max(1.0);
    let asymmetry = (q - q.transpose()).amax();
    if asymmetry > 1e-9 * scale {
        return Err(Error::AsymmetricInput { asymmetry });
    }
    let sym = (q + q.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = [0.0; 6];
    let mut eigenvectors = [Vector6::zeros(); 6];
    for (slot, &k) in order.iter().enumerate() {
        eigenvalues[slot] = eig.eigenvalues[k];
        eigenvectors[slot] = canonical_sign(eig.eigenvectors.column(k).into_owned());
    }
    let l1 = eigenvalues[0];
    let numeric_rank = if l1 > 0.0 {
        eigenvalues.iter().filter(|&&l| l > rank_tolerance * l1).count()
    } else {
        0
    };
    let condition_number = if numeric_rank == 6 { l1 / eigenvalues[5] } else { f64::INFINITY };
    let null: Vec<Vec<f64>> = eigenvectors[numeric_rank..]
        .iter()
        .map(|v| v.iter().copied().collect())
        .collect();
    Ok(StabilityReport {
        hessian: sym,
        eigenvalues,
        eigenvectors,
        condition_number,
        numeric_rank,
        null_directions: label_null_space(&null, &RIGID_NAMES),
    })
}

/// Flip so the largest-magnitude component is positive.
fn canonical_sign(v: Vector6<f64>) -> Vector6<f64> {
    if v[v.iamax()] < 0.0 {
        -v
    } else {
        v
    }
}

/// Describe a null-space basis in terms of named coordinates.
///
/// Coordinate axes lying inside the null space are reported by name. What
/// remains is reported as mixtures of the coordinates it mostly involves.
pub(crate) fn label_null_space(basis: &[Vec<f64>], names: &[&str]) -> Vec<NullDirection> {
    if basis.is_empty() {
        return Vec::new();
    }
    let dim = names.len();
    let b = DMatrix::from_fn(dim, basis.len(), |i, j| basis[j][i]);
    let mut out = Vec::new();
    let mut pure = Vec::new();
    for axis in 0..dim {
        if b.row(axis).norm_squared() >= 1.0 - 1e-6 {
            let mut v = vec![0.0; dim];
            v[axis] = 1.0;
            out.push(NullDirection {
                vector: v,
                label: names[axis].to_string(),
            });
            pure.push(axis);
        }
    }
    let remaining = basis.len().saturating_sub(pure.len());
    if remaining == 0 {
        return out;
    }
    // Project the pure axes out of the span and keep an orthonormal remainder.
    let mut resid = b.clone();
    for &axis in &pure {
        resid.row_mut(axis).fill(0.0);
    }
    let svd = resid.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    for &k in idx.iter().take(remaining) {
        let v = canonical_sign_dyn(u.column(k).iter().copied().collect());
        out.push(NullDirection {
            label: mixture_label(&v, names),
            vector: v,
        });
    }
    out
}

fn canonical_sign_dyn(mut v: Vec<f64>) -> Vec<f64> {
    let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn mixture_label(v: &[f64], names: &[&str]) -> String {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let parts: Vec<String> = v
        .iter()
        .zip(names)
        .filter(|(x, _)| x.abs() >= 0.2 * max)
        .map(|(x, n)| format!("{x:+.2} {n}"))
        .collect();
    format!("mixed({})", parts.join(", "))
}

/// Which patches (and how many points) feed one row of a sampling comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub label: String,
    /// Patch labels whose raster points are kept.
    pub patches: Vec<String>,
    /// Random subset size and seed, applied after patch selection.
    pub subsample: Option<(usize, u64)>,
}

impl SamplingMask {
    pub fn new(label: impl Into<String>, patches: Vec<String>) -> Self {
        Self {
            label: label.into(),
            patches,
            subsample: None,
        }
    }

    pub fn with_subsample(mut self, n: usize, seed: u64) -> Self {
        self.subsample = Some((n, seed));
        self
    }
}

#[derive(Clone, Debug)]
pub struct SamplingRow {
    pub label: String,
    pub points: usize,
    /// Analysis of the centroid-centered `Q`.
    pub report: StabilityReport,
    /// Condition number with lever arms from the camera origin.
    pub raw_condition_number: f64,
}

/// Condition numbers for several contact samplings of one scene.
///
/// Contact points are the noiseless raster of each mask's patches at `spacing`,
/// paired with themselves under `truth` so no registration is involved.
pub fn compare_sampling(
    scene: &Scene,
    masks: &[SamplingMask],
    spacing: f64,
    truth: &RigidTransform,
) -> Result<Vec<SamplingRow>> {
    masks
        .iter()
        .map(|mask| {
            if mask.patches.is_empty() {
                return Err(Error::EmptySelection);
            }
            let (pts, nrm) = scene.raster_surface(&mask.patches, spacing)?;
            let cloud = PointCloud::with_normals(pts, nrm)?;
            let cloud = match mask.subsample {
                Some((n, seed)) => random_downsample(&cloud, n, seed)?,
                None => cloud,
            };
            let cam = cloud.transformed(truth);
            let normals = cam.normals().expect("normals attached above");
            let raw = analyze(&hessian_from_pairs(cam.points(), normals, None), RANK_TOLERANCE)?;
            let c = cam.centroid().ok_or(Error::EmptyCloud)?;
            let report = analyze(&hessian_from_pairs(cam.points(), normals, Some(c)), RANK_TOLERANCE)?;
            Ok(SamplingRow {
                label: mask.label.clone(),
                points: cam.len(),
                report,
                raw_condition_number: raw.condition_number,
            })
        })
        .collect()
}

/// `mask,points,rank,l1..l6,c,c_raw`, rows in input order.
pub fn write_sampling_csv(rows: &[SamplingRow], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("mask,points,rank,l1,l2,l3,l4,l5,l6,c,c_raw\n");
    for r in rows {
        write!(s, "{},{},{}", r.label, r.points, r.report.numeric_rank).unwrap();
        for l in r.report.eigenvalues {
            write!(s, ",{l:e}").unwrap();
        }
        writeln!(s, ",{},{}", r.report.condition_number, r.raw_condition_number).unwrap();
    }
    let path = path.as_ref();
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
