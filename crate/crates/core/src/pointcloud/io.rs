//! ASCII PLY and CSV point cloud files.
//!
//! PLY: `element vertex N` with `x y z` and optional `nx ny nz` properties.
//! Other vertex properties are skipped; elements after `vertex` are ignored.
//! CSV: header `x,y,z` or `x,y,z,nx,ny,nz`. The format is picked by extension.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::Vec3;

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    if is_csv(path) {
        return read_csv(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    parse_ply(&text, path)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud
        .points()
        .iter()
        .chain(cloud.normals().unwrap_or(&[]))
        .any(|p| !p.iter().all(|v| v.is_finite()))
    {
        return Err(Error::NonFiniteValue {
            path: path.into(),
            line: 0,
        });
    }
    let text = if is_csv(path) { format_csv(cloud) } else { format_ply(cloud) };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn format_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 64);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals().is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

fn format_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str(if cloud.normals().is_some() { "x,y,z,nx,ny,nz\n" } else { "x,y,z\n" });
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{},{},{}", p.x, p.y, p.z);
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            let _ = write!(out, ",{},{},{}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

/// Builds a cloud from parsed rows; zero normals mark rejected points.
fn assemble(points: Vec<Vec3>, normals: Option<Vec<Vec3>>, path: &Path, first_line: usize) -> Result<PointCloud> {
    match normals {
        None => Ok(PointCloud::new(points)),
        Some(ns) => {
            let ns = ns
                .into_iter()
                .enumerate()
                .map(|(i, n)| {
                    let norm = n.norm();
                    if norm == 0.0 {
                        Ok(n)
                    } else if (norm - 1.0).abs() < 1e-3 {
                        Ok(n / norm)
                    } else {
                        Err(Error::parse(path, first_line + i, format!("normal has norm {norm}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            PointCloud::with_normals(points, ns)
        }
    }
}

fn parse_values(line: &str, path: &Path, lineno: usize, sep: Option<char>) -> Result<Vec<f64>> {
    let toks: Vec<&str> = match sep {
        Some(c) => line.split(c).map(str::trim).collect(),
        None => line.split_whitespace().collect(),
    };
    let vals = toks
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("`{t}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            path: path.into(),
            line: lineno,
        });
    }
    Ok(vals)
}

pub(crate) fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    if !matches!(lines.next(), Some((_, "ply"))) {
        return Err(Error::parse(path, 1, "missing `ply` magic"));
    }
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", fmt, _] => {
                return Err(Error::parse(
                    path,
                    n,
                    format!("unsupported PLY format `{fmt}`: only ascii is read"),
                ))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", count] => {
                if vertex_count.is_some() {
                    return Err(Error::parse(path, n, "duplicate vertex element"));
                }
                let c = count
                    .parse()
                    .map_err(|_| Error::parse(path, n, format!("bad vertex count `{count}`")))?;
                vertex_count = Some(c);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    return Err(Error::parse(path, n, "vertex must be the first element"));
                }
                in_vertex = false;
            }
            ["property", rest @ ..] if in_vertex => match rest {
                [_ty, name] => props.push((*name).to_string()),
                ["list", ..] => {
                    return Err(Error::parse(path, n, "list properties on vertices are not supported"))
                }
                _ => return Err(Error::parse(path, n, format!("malformed property `{line}`"))),
            },
            ["property", ..] => {}
            ["end_header"] => {
                header_end = Some(n);
                break;
            }
            _ => return Err(Error::parse(path, n, format!("unrecognized header line `{line}`"))),
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(path, 0, "missing end_header"))?;
    let count = vertex_count.ok_or_else(|| Error::parse(path, header_end, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, header_end, "vertex needs x, y, z properties")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, header_end + points.len() + 1, "unexpected end of vertex data"))?;
        let v = parse_values(line, path, n, None)?;
        if v.len() != props.len() {
            return Err(Error::parse(
                path,
                n,
                format!("expected {} values, found {}", props.len(), v.len()),
            ));
        }
        points.push(Vec3::new(v[x], v[y], v[z]));
        if let (Some(ns), Some((a, b, c))) = (normals.as_mut(), normal_cols) {
            ns.push(Vec3::new(v[a], v[b], v[c]));
        }
    }
    assemble(points, normals, path, header_end + 1)
}

fn read_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let header: Vec<String> = match lines.next() {
        Some((_, h)) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let with_normals = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        _ => return Err(Error::parse(path, 1, "expected header `x,y,z[,nx,ny,nz]`")),
    };
    let mut points = Vec::new();
    let mut normals = with_normals.then(Vec::new);
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let v = parse_values(line, path, n, Some(','))?;
        if v.len() != header.len() {
            return Err(Error::parse(
                path,
                n,
                format!("expected {} values, found {}", header.len(), v.len()),
            ));
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
        if let Some(ns) = normals.as_mut() {
            ns.push(Vec3::new(v[3], v[4], v[5]));
        }
    }
    assemble(points, normals, path, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(with_normals: bool) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random(), rng.random::<f64>() * 1e-7))
            .collect();
        if !with_normals {
            return PointCloud::new(pts);
        }
        let ns = (0..200)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0).normalize())
            .collect();
        PointCloud::with_normals(pts, ns).unwrap()
    }

    #[test]
    fn ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for normals in [false, true] {
            let c = random_cloud(normals);
            let p = dir.path().join("c.ply");
            write_cloud(&c, &p).unwrap();
            let back = read_cloud(&p).unwrap();
            assert_eq!(back.len(), c.len());
            for (a, b) in c.points().iter().zip(back.points()) {
                assert!((a - b).amax() <= 1e-9);
            }
            assert_eq!(back.normals().is_some(), normals);
            if let (Some(a), Some(b)) = (c.normals(), back.normals()) {
                assert!(a.iter().zip(b).all(|(x, y)| (x - y).amax() < 1e-12));
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = random_cloud(true);
        let p = dir.path().join("c.csv");
        write_cloud(&c, &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("x,y,z,nx,ny,nz\n"));
        let back = read_cloud(&p).unwrap();
        assert_eq!(back.len(), c.len());
        assert!(c.points().iter().zip(back.points()).all(|(a, b)| (a - b).amax() <= 1e-9));
    }

    #[test]
    fn header_errors_name_the_line() {
        let p = Path::new("bad.ply");
        let err = parse_ply("ply\nformat ascii 1.0\nelement vertex x\nend_header\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_ply("ply\nformat binary_little_endian 1.0\n", p).unwrap_err();
        assert!(err.to_string().contains("binary_little_endian"));
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_ply("PLY?\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_ply(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n",
            p,
        )
        .unwrap_err();
        assert!(err.to_string().contains("x, y, z"));
    }

    #[test]
    fn data_errors() {
        let p = Path::new("bad.ply");
        let head = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
        let err = parse_ply(&format!("{head}1 2 3\n1 2\n"), p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 9, .. }), "{err}");
        let err = parse_ply(&format!("{head}1 2 3\n1 nan 3\n"), p).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { line: 9, .. }));
        let err = parse_ply(&format!("{head}1 2 3\n"), p).unwrap_err();
        assert!(err.to_string().contains("unexpected end"));
    }

    #[test]
    fn extra_properties_and_elements_are_skipped() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 1 1 0\n";
        let c = parse_ply(text, Path::new("x.ply")).unwrap();
        assert_eq!(c.points()[1], Vec3::new(1.0, 1.0, 1.0));
        assert!(c.normals().is_none());
    }

    #[test]
    fn writing_non_finite_fails() {
        let dir = tempfile::tempdir().unwrap();
        let c = PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]);
        assert!(matches!(
            write_cloud(&c, dir.path().join("n.ply")),
            Err(Error::NonFiniteValue { .. })
        ));
    }
}
