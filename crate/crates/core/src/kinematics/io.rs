//! DH chain files (`alpha r d` per line) and joint-state CSV logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DhRow, JointState, KinematicChain};
use crate::error::{Error, Result};

pub fn read_chain(path: impl AsRef<Path>) -> Result<KinematicChain> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chain(&text, path)
}

pub(crate) fn parse_chain(text: &str, path: &Path) -> Result<KinematicChain> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if vals.len() != 3 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected `alpha r d`, found {} values", vals.len()),
            ));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                path: path.into(),
                line: i + 1,
            });
        }
        rows.push(DhRow::new(vals[0], vals[1], vals[2]));
    }
    KinematicChain::new(rows).map_err(|_| Error::parse(path, 0, "no DH rows"))
}

pub fn write_chain(chain: &KinematicChain, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# alpha[rad] r[m] d[m]\n");
    for row in chain.rows() {
        let _ = writeln!(out, "{} {} {}", row.alpha, row.r, row.d);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_joint_log(path: impl AsRef<Path>) -> Result<Vec<JointState>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    for (k, h) in headers.iter().enumerate() {
        if h != format!("theta_{}", k + 1) {
            return Err(Error::parse(
                path,
                1,
                format!("expected header column `theta_{}`, found `{h}`", k + 1),
            ));
        }
    }
    let mut logs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), rec.len()),
            ));
        }
        let angles = rec
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteValue {
                path: path.into(),
                line,
            });
        }
        logs.push(JointState::new(angles));
    }
    Ok(logs)
}

pub fn write_joint_log(logs: &[JointState], k: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record((1..=k).map(|i| format!("theta_{i}")))
        .map_err(|e| csv_error(path, e))?;
    for log in logs {
        w.write_record(log.angles().iter().map(|a| a.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_file_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chain.txt");
        let chain = KinematicChain::generic_six_dof();
        write_chain(&chain, &p).unwrap();
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("\n# trailing comment\n\n");
        fs::write(&p, text).unwrap();
        assert_eq!(read_chain(&p).unwrap(), chain);
    }

    #[test]
    fn chain_parse_errors_name_the_line() {
        let err = parse_chain("0 1 0\n0 1\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_chain("# nothing\n", Path::new("c.txt")).is_err());
        let err = parse_chain("0 inf 0\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { line: 1, .. }));
    }

    #[test]
    fn joint_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("joints.csv");
        let logs = vec![
            JointState::new(vec![0.1, -0.2, 1.0 / 3.0]),
            JointState::new(vec![3.0, 2.5e-9, -1.0]),
        ];
        write_joint_log(&logs, 3, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("theta_1,theta_2,theta_3\n"));
        assert_eq!(read_joint_log(&p).unwrap(), logs);
    }

    #[test]
    fn joint_log_rejects_bad_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("joints.csv");
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_joint_log(&p), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "theta_1,theta_2\n1,x\n").unwrap();
        assert!(matches!(read_joint_log(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "theta_1,theta_2\n1,NaN\n").unwrap();
        assert!(matches!(read_joint_log(&p), Err(Error::NonFiniteValue { line: 2, .. })));
    }
}
