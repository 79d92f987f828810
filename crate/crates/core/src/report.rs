//! Plain-text result files.
//!
//! Reports are `key value...` lines with `#` comments. The first non-comment
//! line is always `extrinsic x y z roll pitch yaw` so a report can be fed back
//! wherever an extrinsic file is expected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::calibration::{CalibrationResult, IdentifiabilityReport};
use crate::error::{Error, NullDirection, Result};
use crate::registration::IcpResult;
use crate::se3::ExtrinsicParams;
use crate::stability::StabilityReport;

const CONVENTION: &str = "# extrinsic: x y z (m) roll pitch yaw (rad), R = Rz(yaw) Ry(pitch) Rx(roll), p_camera = R p_base + t\n";

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// `IDENTIFIABLE` or `DEGENERATE: <labels>`.
pub fn verdict(null: &[NullDirection]) -> String {
    if null.is_empty() {
        "IDENTIFIABLE".to_string()
    } else {
        format!(
            "DEGENERATE: {}",
            null.iter().map(|d| d.label.as_str()).collect::<Vec<_>>().join("; ")
        )
    }
}

/// Rigid registration report with the stability of the final pairing appended.
pub fn registration_report(
    extrinsic: &ExtrinsicParams,
    icp: &IcpResult,
    stability: &StabilityReport,
    raw_condition: f64,
) -> String {
    let mut s = String::from(CONVENTION);
    writeln!(s, "extrinsic {extrinsic}").unwrap();
    writeln!(s, "transform {}", icp.transform).unwrap();
    writeln!(s, "cost {}", icp.final_cost).unwrap();
    writeln!(s, "iterations {}", icp.iterations).unwrap();
    writeln!(s, "converged {}", icp.converged).unwrap();
    writeln!(s, "correspondences {}", icp.correspondences_used).unwrap();
    s.push_str("# Q sums weight-1 pairs only; lever arms measured from the paired-point centroid\n");
    s.push_str("# translation (m) and rotation (rad) blocks are not rescaled\n");
    writeln!(s, "eigenvalues {}", join(stability.eigenvalues)).unwrap();
    writeln!(s, "condition_number {}", stability.condition_number).unwrap();
    writeln!(s, "condition_number_raw {raw_condition}").unwrap();
    writeln!(s, "rank {}", stability.numeric_rank).unwrap();
    writeln!(s, "verdict {}", verdict(&stability.null_directions)).unwrap();
    s
}

/// Joint calibration report: extrinsic, biases, augmented spectrum and verdict.
pub fn calibration_report(result: &CalibrationResult, identifiability: Option<&IdentifiabilityReport>) -> String {
    let mut s = String::from(CONVENTION);
    writeln!(s, "extrinsic {}", result.extrinsic).unwrap();
    writeln!(s, "transform {}", result.transform).unwrap();
    writeln!(s, "bias_rad {}", join(result.joint_biases.iter().copied())).unwrap();
    writeln!(s, "bias_deg {}", join(result.joint_biases.iter().map(|b| b.to_degrees()))).unwrap();
    writeln!(s, "cost {}", result.final_cost).unwrap();
    writeln!(s, "iterations {}", result.iterations).unwrap();
    writeln!(s, "converged {}", result.converged).unwrap();
    writeln!(s, "correspondences {}", result.correspondences_used).unwrap();
    writeln!(s, "parameters {}", result.parameter_names.join(" ")).unwrap();
    let h = &result.augmented_hessian;
    let mut eig: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    writeln!(s, "spectrum {}", join(eig)).unwrap();
    writeln!(s, "determinant {}", h.determinant()).unwrap();
    if let Some(d) = &result.degeneracy {
        writeln!(s, "condition_number {}", d.condition_number).unwrap();
        writeln!(s, "rejected_bias_deg {}", join(d.rejected_biases.iter().map(|b| b.to_degrees()))).unwrap();
        s.push_str("# bias solve rejected; extrinsic above is the rigid-only solution\n");
    }
    if let Some(id) = identifiability {
        s.push_str("# identifiability over all parameters (base-joint bias included)\n");
        writeln!(s, "identifiability_rank {} of {}", id.numeric_rank, id.parameter_names.len()).unwrap();
        writeln!(s, "identifiability_spectrum {}", join(id.eigenvalues.iter().copied())).unwrap();
        for d in &id.null_directions {
            writeln!(s, "null_direction {}", d.label).unwrap();
        }
    }
    let verdict_line = match &result.degeneracy {
        Some(d) => verdict(&d.null_directions),
        None => "IDENTIFIABLE".to_string(),
    };
    writeln!(s, "verdict {verdict_line}").unwrap();
    s
}

/// `iteration,cost` rows.
pub fn cost_history_csv(history: &[f64]) -> String {
    let mut s = String::from("iteration,cost\n");
    for (i, c) in history.iter().enumerate() {
        writeln!(s, "{i},{c}").unwrap();
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pull the `verdict` line back out of a report.
pub fn read_verdict(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("verdict "))
}
