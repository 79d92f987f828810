//! Point clouds, exact nearest-neighbor search, normal estimation and file I/O.

mod index;
mod io;
mod normals;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use index::NeighborIndex;
pub use io::{read_cloud, write_cloud};
pub use normals::estimate_normals;

use crate::error::{Error, Result};
use crate::se3::RigidTransform;
use crate::Vec3;

/// Points with optional per-point unit normals and non-negative weights.
///
/// Weight 0 marks a rejected point; such points may carry a zero normal.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        let n = points.len();
        Self {
            points,
            normals: None,
            weights: vec![1.0; n],
        }
    }

    /// Attach normals. Non-unit normals (beyond 1e-6) are rejected unless zero,
    /// in which case the point's weight is set to 0.
    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        let mut weights = vec![1.0; points.len()];
        for (i, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if norm == 0.0 {
                weights[i] = 0.0;
            } else if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "normal {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self {
            points,
            normals: Some(normals),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be non-negative and parallel to points".into(),
            ));
        }
        self.weights = weights;
        Ok(())
    }

    /// Drop normals, keeping points and weights.
    pub fn without_normals(&self) -> PointCloud {
        Self {
            points: self.points.clone(),
            normals: None,
            weights: self.weights.clone(),
        }
    }

    /// Indices of points with positive weight.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Rigidly move points and rotate normals.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        Self {
            points: self.points.iter().map(|p| t.apply_to_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_to_vector(n)).collect()),
            weights: self.weights.clone(),
        }
    }

    /// Subset in the given index order, carrying normals and weights.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Concatenate two clouds. Normals are kept only if both have them.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self {
            points,
            normals,
            weights,
        }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.len() as f64)
    }
}

/// A contact-to-depth pairing used by one ICP iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub normal: Vec3,
    pub weight: f64,
    /// Euclidean pairing distance under the transform used for the search.
    pub distance: f64,
}

/// Uniform sample of `n` points without replacement, in ascending index order.
pub fn random_downsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n > cloud.len() {
        return Err(Error::TargetTooLarge {
            requested: n,
            available: cloud.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), n).into_vec();
    idx.sort_unstable();
    Ok(cloud.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.5)).collect())
    }

    #[test]
    fn downsample_full_size_keeps_point_set() {
        let c = cloud(100);
        assert_eq!(random_downsample(&c, 100, 9).unwrap(), c);
    }

    #[test]
    fn downsample_65k_to_500() {
        let c = cloud(65_000);
        let d = random_downsample(&c, 500, 1).unwrap();
        assert_eq!(d.len(), 500);
        let set: std::collections::HashSet<_> = c.points().iter().map(|p| p.x as u64).collect();
        assert!(d.points().iter().all(|p| set.contains(&(p.x as u64))));
        let distinct: std::collections::HashSet<_> = d.points().iter().map(|p| p.x as u64).collect();
        assert_eq!(distinct.len(), 500);
    }

    #[test]
    fn downsample_is_deterministic_and_carries_normals() {
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let c = PointCloud::with_normals(pts, vec![Vec3::z(); 50]).unwrap();
        let a = random_downsample(&c, 10, 42).unwrap();
        assert_eq!(a, random_downsample(&c, 10, 42).unwrap());
        assert_ne!(a, random_downsample(&c, 10, 43).unwrap());
        assert_eq!(a.normals().unwrap().len(), 10);
    }

    #[test]
    fn downsample_too_many() {
        assert!(matches!(
            random_downsample(&cloud(3), 4, 0),
            Err(Error::TargetTooLarge { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn normals_validation() {
        let pts = vec![Vec3::zeros(), Vec3::x()];
        assert!(PointCloud::with_normals(pts.clone(), vec![Vec3::z()]).is_err());
        assert!(PointCloud::with_normals(pts.clone(), vec![Vec3::z(), Vec3::z() * 2.0]).is_err());
        let c = PointCloud::with_normals(pts, vec![Vec3::z(), Vec3::zeros()]).unwrap();
        assert_eq!(c.weights(), &[1.0, 0.0]);
        assert_eq!(c.active_indices(), vec![0]);
    }
}
