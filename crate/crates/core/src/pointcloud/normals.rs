use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::{NeighborIndex, PointCloud};
use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Relative eigenvalue floor below which a neighborhood is treated as collinear.
const RANK_TOLERANCE: f64 = 1e-10;
/// Normals closer than this (|cos|) to perpendicular to the view ray are ambiguous.
const GRAZING_COS: f64 = 1e-3;

/// PCA normals from the `k` nearest neighbors of each point, oriented toward `viewpoint`.
///
/// Collinear neighborhoods and grazing views get a zero normal and weight 0.
/// Fails only when every neighborhood is degenerate.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("normal_k must be >= 3, got {k}")));
    }
    if cloud.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "normal estimation with k = {k} needs at least {} points, cloud has {}",
            k + 1,
            cloud.len()
        )));
    }
    let index = NeighborIndex::build(cloud)?;
    let pts = cloud.points();
    let estimates: Vec<Option<Vec3>> = pts
        .par_iter()
        .map(|p| {
            let nbrs = index.k_nearest(p, k);
            let mean: Vec3 = nbrs.iter().map(|&(i, _)| pts[i]).sum::<Vec3>() / nbrs.len() as f64;
            let cov = nbrs.iter().fold(Mat3::zeros(), |acc, &(i, _)| {
                let d = pts[i] - mean;
                acc + d * d.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (middle, largest) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
            if !(largest > 0.0) || middle <= RANK_TOLERANCE * largest {
                return None;
            }
            let mut n: Vec3 = eig.eigenvectors.column(order[0]).normalize();
            let view = viewpoint - p;
            let s = n.dot(&view);
            if s.abs() < GRAZING_COS * view.norm() {
                return None;
            }
            if s < 0.0 {
                n = -n;
            }
            Some(n)
        })
        .collect();

    let degenerate = estimates.iter().filter(|e| e.is_none()).count();
    if degenerate == estimates.len() {
        return Err(Error::DegenerateNeighborhood { degenerate });
    }
    let mut weights = cloud.weights().to_vec();
    let normals = estimates
        .iter()
        .zip(weights.iter_mut())
        .map(|(e, w)| match e {
            Some(n) => *n,
            None => {
                *w = 0.0;
                Vec3::zeros()
            }
        })
        .collect();
    let mut out = PointCloud::with_normals(pts.to_vec(), normals)?;
    out.set_weights(weights)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_cloud() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(Vec3::new(i as f64 * 0.01, j as f64 * 0.013 + 0.001 * i as f64, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn plane_normals_face_viewpoint() {
        let c = estimate_normals(&plane_cloud(), 8, &Vec3::new(0.1, 0.1, 1.0)).unwrap();
        for n in c.normals().unwrap() {
            assert!((n - Vec3::z()).norm() < 1e-6, "{n:?}");
        }
        let c = estimate_normals(&plane_cloud(), 8, &Vec3::new(0.1, 0.1, -1.0)).unwrap();
        assert!(c.normals().unwrap().iter().all(|n| (n + Vec3::z()).norm() < 1e-6));
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Fibonacci lattice: near-uniform density over the unit sphere.
        let r = 1.0;
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * r
            })
            .collect();
        let view = Vec3::new(0.0, 0.0, 10.0 * r);
        let c = estimate_normals(&PointCloud::new(pts), 12, &view).unwrap();
        let cos_tol = 2f64.to_radians().cos();
        let mut checked = 0;
        for ((p, n), w) in c.points().iter().zip(c.normals().unwrap()).zip(c.weights()) {
            if *w == 0.0 {
                continue;
            }
            checked += 1;
            assert!(n.dot(&p.normalize()).abs() >= cos_tol);
            assert!(n.dot(&(view - p)) > 0.0);
        }
        assert!(checked > 1900);
    }

    #[test]
    fn dihedral_planes_are_right_away_from_the_crease() {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                pts.push(Vec3::new(i as f64 * 0.01 + 0.005, j as f64 * 0.01, 0.0));
                pts.push(Vec3::new(0.0, j as f64 * 0.01, i as f64 * 0.01 + 0.005));
            }
        }
        let c = estimate_normals(&PointCloud::new(pts), 10, &Vec3::new(1.0, 0.15, 1.0)).unwrap();
        for (p, n) in c.points().iter().zip(c.normals().unwrap()) {
            if p.x > 0.05 {
                assert!((n - Vec3::z()).norm() < 1e-6);
            } else if p.z > 0.05 {
                assert!((n - Vec3::x()).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            estimate_normals(&PointCloud::new(pts), 5, &Vec3::z()),
            Err(Error::DegenerateNeighborhood { degenerate: 20 })
        ));
    }

    #[test]
    fn argument_checks() {
        let c = plane_cloud();
        assert!(matches!(estimate_normals(&c, 2, &Vec3::z()), Err(Error::InvalidArgument(_))));
        let tiny = c.select(&[0, 1, 2]);
        assert!(matches!(estimate_normals(&tiny, 3, &Vec3::z()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn grazing_view_is_weighted_out() {
        // Viewpoint lies in the z = 0 plane; the far wall at y = 5 is seen head-on.
        let floor = plane_cloud();
        let wall = PointCloud::new(
            floor.points().iter().map(|p| Vec3::new(p.x, 5.0, p.y + 1.0)).collect(),
        );
        let c = estimate_normals(&floor.concat(&wall), 8, &Vec3::new(0.1, -100.0, 0.0)).unwrap();
        let (f, w) = c.weights().split_at(floor.len());
        assert!(f.iter().all(|&x| x == 0.0));
        assert!(w.iter().all(|&x| x == 1.0));
        assert!(c.normals().unwrap()[..floor.len()].iter().all(|n| *n == Vec3::zeros()));
    }
}
