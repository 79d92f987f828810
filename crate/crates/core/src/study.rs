//! Registration error against ground truth as the contact map is thinned out.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{random_downsample, PointCloud};
use crate::registration::{register, IcpConfig};
use crate::se3::RigidTransform;

/// Error statistics for one subset size.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRow {
    pub count: usize,
    pub trials: usize,
    /// Trials where ICP errored, did not converge, or ended rank deficient.
    pub failures: usize,
    /// Mean and sample standard deviation over all trials (m); a failed trial
    /// contributes the error of whatever transform it stopped at, or the
    /// initial guess when it errored outright.
    pub translation_mean: f64,
    pub translation_std: f64,
    /// Same for the rotation angle (rad).
    pub rotation_mean: f64,
    pub rotation_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Register `trials` random subsets of `contact` per count and score each
/// result against `truth`.
///
/// Trial `i` of count `n` samples with seed `seed + i`, so the same subsets are
/// drawn whatever the thread count.
#[allow(clippy::too_many_arguments)]
pub fn downsample_study(
    contact: &PointCloud,
    depth: &PointCloud,
    initial: &RigidTransform,
    truth: &RigidTransform,
    counts: &[usize],
    trials: usize,
    seed: u64,
    cfg: &IcpConfig,
) -> Result<Vec<CountRow>> {
    if trials == 0 || counts.is_empty() {
        return Err(Error::InvalidArgument("need at least one count and one trial".into()));
    }
    if let Some(&n) = counts.iter().find(|&&n| n > contact.len() || n == 0) {
        return Err(Error::TargetTooLarge {
            requested: n,
            available: contact.len(),
        });
    }
    counts
        .iter()
        .map(|&count| {
            let runs: Vec<(f64, f64, bool)> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let subset = random_downsample(contact, count, seed.wrapping_add(i as u64))?;
                    let (t, ok) = match register(&subset, depth, initial, cfg) {
                        Ok(r) => {
                            let ok = r.converged && r.degeneracy.is_none();
                            (r.transform, ok)
                        }
                        Err(_) => (initial.clone(), false),
                    };
                    let (rot, trans) = t.distance_to(truth);
                    Ok((trans, rot, ok))
                })
                .collect::<Result<_>>()?;
            let trans: Vec<f64> = runs.iter().map(|r| r.0).collect();
            let rot: Vec<f64> = runs.iter().map(|r| r.1).collect();
            let (translation_mean, translation_std) = mean_std(&trans);
            let (rotation_mean, rotation_std) = mean_std(&rot);
            Ok(CountRow {
                count,
                trials,
                failures: runs.iter().filter(|r| !r.2).count(),
                translation_mean,
                translation_std,
                rotation_mean,
                rotation_std,
            })
        })
        .collect()
}

/// `count,trials,failures,translation_mean,translation_std,rotation_mean,rotation_std`.
pub fn study_csv(rows: &[CountRow]) -> String {
    let mut s = String::from("count,trials,failures,translation_mean,translation_std,rotation_mean,rotation_std\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.count, r.trials, r.failures, r.translation_mean, r.translation_std, r.rotation_mean, r.rotation_std
        )
        .unwrap();
    }
    s
}
