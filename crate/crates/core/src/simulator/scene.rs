use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::se3::rot_z;
use crate::Vec3;

/// Rectangle `corner + u e1 + v e2`, `u, v` in `[0, 1]`, facing `e1 x e2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub label: String,
    pub corner: Vec3,
    pub edge1: Vec3,
    pub edge2: Vec3,
}

impl Patch {
    pub fn new(label: impl Into<String>, corner: Vec3, edge1: Vec3, edge2: Vec3) -> Result<Self> {
        let label = label.into();
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad patch label `{label}`")));
        }
        if !(edge1.norm() > 0.0 && edge2.norm() > 0.0) {
            return Err(Error::InvalidArgument(format!("patch `{label}` has a zero edge")));
        }
        if edge1.dot(&edge2).abs() > 1e-9 * edge1.norm() * edge2.norm() {
            return Err(Error::InvalidArgument(format!("patch `{label}` edges are not orthogonal")));
        }
        if !(corner.iter().chain(edge1.iter()).chain(edge2.iter()).all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument(format!("patch `{label}` has non-finite geometry")));
        }
        Ok(Self {
            label,
            corner,
            edge1,
            edge2,
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.edge1.cross(&self.edge2).normalize()
    }

    pub fn area(&self) -> f64 {
        self.edge1.norm() * self.edge2.norm()
    }

    pub fn center(&self) -> Vec3 {
        self.point_at(0.5, 0.5)
    }

    pub fn point_at(&self, u: f64, v: f64) -> Vec3 {
        self.corner + self.edge1 * u + self.edge2 * v
    }

    /// Signed distance from the patch plane, positive on the normal side.
    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(&(p - self.corner))
    }

    /// Parameters `(u, v)` of the projection of `p` onto the plane.
    pub fn coordinates(&self, p: &Vec3) -> (f64, f64) {
        let d = p - self.corner;
        (
            d.dot(&self.edge1) / self.edge1.norm_squared(),
            d.dot(&self.edge2) / self.edge2.norm_squared(),
        )
    }

    /// Euclidean distance from `p` to the closest point of the rectangle.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let (u, v) = self.coordinates(p);
        (p - self.point_at(u.clamp(0.0, 1.0), v.clamp(0.0, 1.0))).norm()
    }

    /// Whether the open segment `a -> b` crosses the patch interior.
    pub fn blocks_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let n = self.normal();
        let da = n.dot(&(a - self.corner));
        let db = n.dot(&(b - self.corner));
        if da * db >= 0.0 || (da - db).abs() < 1e-12 {
            return false;
        }
        let s = da / (da - db);
        if !(1e-9..1.0 - 1e-9).contains(&s) {
            return false;
        }
        let (u, v) = self.coordinates(&(a + (b - a) * s));
        (1e-9..1.0 - 1e-9).contains(&u) && (1e-9..1.0 - 1e-9).contains(&v)
    }
}

/// Named planar patches in the manipulator base frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    patches: Vec<Patch>,
}

pub const PRESETS: [&str; 4] = ["two_prisms_table", "one_prism_table", "single_plane", "orthogonal_triplet"];

/// Table top height in the presets (m, base frame).
const TABLE_Z: f64 = -0.15;
/// Free space required along the normal for a raster point to be touchable (m).
const APPROACH_CLEARANCE: f64 = 0.4;
/// Radius of the flat tool tip (m); it cannot touch closer than this to a wall.
const TIP_RADIUS: f64 = 0.01;

impl Scene {
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::EmptySelection);
        }
        for (i, p) in patches.iter().enumerate() {
            if patches[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::InvalidArgument(format!("duplicate patch label `{}`", p.label)));
            }
        }
        Ok(Self { patches })
    }

    /// Built-in layouts, all in front of the base at negative x.
    pub fn preset(name: &str) -> Result<Self> {
        let table = || {
            Patch::new(
                "table_top",
                Vec3::new(-1.35, -0.6, TABLE_Z),
                Vec3::new(1.2, 0.0, 0.0),
                Vec3::new(0.0, 0.8, 0.0),
            )
        };
        let big = || prism("big", Vec3::new(-0.5, -0.2, TABLE_Z), Vec3::new(0.4, 0.3, 0.345), 0.0);
        let small = || {
            prism(
                "small",
                Vec3::new(-1.1, -0.44, TABLE_Z),
                Vec3::new(0.25, 0.2, 0.15),
                -30f64.to_radians(),
            )
        };
        let patches = match name {
            "two_prisms_table" => {
                let mut v = vec![table()?];
                v.extend(big()?);
                v.extend(small()?);
                v
            }
            "one_prism_table" => {
                let mut v = vec![table()?];
                v.extend(big()?);
                v
            }
            "single_plane" => vec![table()?],
            "orthogonal_triplet" => vec![
                Patch::new(
                    "floor",
                    Vec3::new(-1.3, -0.6, TABLE_Z),
                    Vec3::new(0.8, 0.0, 0.0),
                    Vec3::new(0.0, 0.6, 0.0),
                )?,
                Patch::new(
                    "wall_y",
                    Vec3::new(-1.3, -0.6, TABLE_Z),
                    Vec3::new(0.0, 0.0, 0.4),
                    Vec3::new(0.8, 0.0, 0.0),
                )?,
                Patch::new(
                    "wall_x",
                    Vec3::new(-1.3, -0.6, TABLE_Z),
                    Vec3::new(0.0, 0.6, 0.0),
                    Vec3::new(0.0, 0.0, 0.4),
                )?,
            ],
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Self::new(patches)
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn labels(&self) -> Vec<String> {
        self.patches.iter().map(|p| p.label.clone()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.patches
            .iter()
            .position(|p| p.label == label)
            .ok_or_else(|| Error::UnknownPatch(label.to_string()))
    }

    pub fn patch(&self, label: &str) -> Result<&Patch> {
        Ok(&self.patches[self.index_of(label)?])
    }

    /// Patch indices for `labels`, in the order given.
    pub fn select(&self, labels: &[String]) -> Result<Vec<usize>> {
        if labels.is_empty() {
            return Err(Error::EmptySelection);
        }
        labels.iter().map(|l| self.index_of(l)).collect()
    }

    /// Whether any patch other than `skip` crosses the open segment `a -> b`.
    pub fn segment_blocked(&self, a: &Vec3, b: &Vec3, skip: usize) -> bool {
        self.patches
            .iter()
            .enumerate()
            .any(|(i, p)| i != skip && p.blocks_segment(a, b))
    }

    /// Labels of patches facing `viewpoint`.
    pub fn visible_from(&self, viewpoint: &Vec3) -> Vec<String> {
        self.patches
            .iter()
            .filter(|p| p.normal().dot(&(viewpoint - p.center())) > 0.0)
            .map(|p| p.label.clone())
            .collect()
    }

    /// Boustrophedon raster over the selected patches as `(patch index, point)`.
    ///
    /// Points are inset half a spacing from the edges. Points whose approach
    /// along the normal is blocked by another patch (e.g. table under a box),
    /// or where the tool tip would hit a neighbouring wall, are skipped.
    pub fn raster_points(&self, labels: &[String], spacing: f64) -> Result<Vec<(usize, Vec3)>> {
        let mut out = Vec::new();
        for i in self.select(labels)? {
            let p = &self.patches[i];
            let n = p.normal();
            for (u, v) in raster_grid(p, spacing)? {
                let x = p.point_at(u, v);
                let tip = x + n * TIP_RADIUS;
                let cramped = self
                    .patches
                    .iter()
                    .enumerate()
                    .any(|(j, q)| j != i && q.distance(&tip) < TIP_RADIUS - 1e-12);
                if !cramped && !self.segment_blocked(&x, &(x + n * APPROACH_CLEARANCE), i) {
                    out.push((i, x));
                }
            }
        }
        Ok(out)
    }

    /// Raster points and their patch normals.
    pub fn raster_surface(&self, labels: &[String], spacing: f64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
        Ok(self
            .raster_points(labels, spacing)?
            .into_iter()
            .map(|(i, x)| (x, self.patches[i].normal()))
            .unzip())
    }

    /// Parse a patch list: `label cx cy cz e1x e1y e1z e2x e2y e2z` per line, `#` comments.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut patches = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 10 {
                return Err(Error::parse(source, i + 1, format!("expected 10 fields, found {}", tok.len())));
            }
            let mut v = [0.0f64; 9];
            for (slot, t) in v.iter_mut().zip(&tok[1..]) {
                *slot = t
                    .parse()
                    .map_err(|_| Error::parse(source, i + 1, format!("bad number `{t}`")))?;
                if !slot.is_finite() {
                    return Err(Error::NonFiniteValue {
                        path: source.to_path_buf(),
                        line: i + 1,
                    });
                }
            }
            let patch = Patch::new(
                tok[0],
                Vec3::new(v[0], v[1], v[2]),
                Vec3::new(v[3], v[4], v[5]),
                Vec3::new(v[6], v[7], v[8]),
            )
            .map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            patches.push(patch);
        }
        Self::new(patches)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# label cx cy cz e1x e1y e1z e2x e2y e2z\n");
        for p in &self.patches {
            write!(s, "{}", p.label).unwrap();
            for x in p.corner.iter().chain(p.edge1.iter()).chain(p.edge2.iter()) {
                write!(s, " {x}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Boustrophedon `(u, v)` grid: rows along `edge2`, alternating direction along `edge1`.
pub(crate) fn raster_grid(p: &Patch, spacing: f64) -> Result<Vec<(f64, f64)>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("raster spacing must be > 0, got {spacing}")));
    }
    let axis = |len: f64| -> Vec<f64> {
        let n = ((len / spacing + 1e-9).floor() as usize).max(1);
        let start = (len - (n - 1) as f64 * spacing) / 2.0;
        (0..n).map(|i| ((start + i as f64 * spacing) / len).clamp(0.0, 1.0)).collect()
    };
    let us = axis(p.edge1.norm());
    let vs = axis(p.edge2.norm());
    let mut out = Vec::with_capacity(us.len() * vs.len());
    for (row, &v) in vs.iter().enumerate() {
        if row % 2 == 0 {
            out.extend(us.iter().map(|&u| (u, v)));
        } else {
            out.extend(us.iter().rev().map(|&u| (u, v)));
        }
    }
    Ok(out)
}

/// The six faces of a box resting on its bottom face, centered at `base`
/// and turned by `yaw` about the vertical.
/// Labels are `{prefix}_top`, `_bottom`, `_px`, `_nx`, `_py`, `_ny` (local axes).
fn prism(prefix: &str, base: Vec3, size: Vec3, yaw: f64) -> Result<Vec<Patch>> {
    let r = rot_z(yaw);
    let (sx, sy, sz) = (r * Vec3::x() * size.x, r * Vec3::y() * size.y, Vec3::z() * size.z);
    let min = base - (sx + sy) / 2.0;
    Ok(vec![
        Patch::new(format!("{prefix}_top"), min + sz, sx, sy)?,
        Patch::new(format!("{prefix}_bottom"), min, sy, sx)?,
        Patch::new(format!("{prefix}_px"), min + sx, sy, sz)?,
        Patch::new(format!("{prefix}_nx"), min, sz, sy)?,
        Patch::new(format!("{prefix}_py"), min + sy, sz, sx)?,
        Patch::new(format!("{prefix}_ny"), min, sx, sz)?,
    ])
}
