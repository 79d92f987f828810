use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::Scene;
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::se3::RigidTransform;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthScanConfig {
    /// True `T_CB`; the sensor sits at its inverse translation.
    pub camera_pose: RigidTransform,
    /// Samples per square metre of visible surface.
    pub point_density: f64,
    /// Noise along the surface normal (m).
    pub gaussian_sigma: f64,
    /// Peak of a paraboloid warp over each patch (m), zero at the corners.
    pub bow_amplitude: f64,
    /// Drop samples whose line of sight crosses another patch.
    pub occlusion: bool,
    pub seed: u64,
}

impl DepthScanConfig {
    pub fn new(camera_pose: RigidTransform, point_density: f64, seed: u64) -> Self {
        Self {
            camera_pose,
            point_density,
            gaussian_sigma: 0.0,
            bow_amplitude: 0.0,
            occlusion: true,
            seed,
        }
    }

    pub fn camera_position(&self) -> Vec3 {
        self.camera_pose.inverse().translation
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.point_density > 0.0) {
            return Err(Error::InvalidArgument(format!("point_density must be > 0, got {}", self.point_density)));
        }
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gaussian_sigma must be >= 0, got {}", self.gaussian_sigma)));
        }
        if !self.bow_amplitude.is_finite() {
            return Err(Error::InvalidArgument("bow_amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Stream id for sample `i` of patch `p`; each sample draws from its own stream.
fn stream(patch: usize, i: usize) -> u64 {
    ((patch as u64) << 40) | i as u64
}

/// Random samples on the patches facing the sensor, in the camera frame, with true normals.
///
/// `round(density * area)` candidates are drawn per patch; back-facing and
/// (optionally) occluded candidates are discarded. Output order is patch
/// order then draw order, independent of the thread count.
pub fn render_depth(scene: &Scene, cfg: &DepthScanConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let cam = cfg.camera_position();
    let noise = Normal::new(0.0, cfg.gaussian_sigma).expect("sigma checked");
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (pi, patch) in scene.patches().iter().enumerate() {
        let n = patch.normal();
        // n . (cam - p) is constant over a plane.
        if n.dot(&(cam - patch.corner)) <= 0.0 {
            continue;
        }
        let count = (cfg.point_density * patch.area()).round() as usize;
        let samples: Vec<Option<Vec3>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(stream(pi, i));
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let surface = patch.point_at(u, v);
                if cfg.occlusion && scene.segment_blocked(&surface, &cam, pi) {
                    return None;
                }
                let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
                let bow = cfg.bow_amplitude * (1.0 - 0.5 * (a * a + b * b));
                let offset = if cfg.gaussian_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Some(surface + n * (bow + offset))
            })
            .collect();
        let rn = cfg.camera_pose.apply_to_vector(&n);
        for s in samples.into_iter().flatten() {
            points.push(cfg.camera_pose.apply_to_point(&s));
            normals.push(rn);
        }
    }
    PointCloud::with_normals(points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::ExtrinsicParams;
    use crate::simulator::{trial_extrinsic, Patch};

    fn plane() -> Scene {
        Scene::new(vec![Patch::new("p", Vec3::new(-1.0, -1.0, 0.0), Vec3::x() * 2.0, Vec3::y() * 2.0).unwrap()]).unwrap()
    }

    fn overhead() -> RigidTransform {
        // Camera 1.5 m above the origin looking straight down.
        ExtrinsicParams::from_degrees(0.0, 0.0, 1.5, 180.0, 0.0, 0.0).to_transform()
    }

    #[test]
    fn noiseless_points_lie_on_plane() {
        let cfg = DepthScanConfig::new(overhead(), 500.0, 1);
        let c = render_depth(&plane(), &cfg).unwrap();
        assert_eq!(c.len(), 2000);
        let back = cfg.camera_pose.inverse();
        for p in c.points() {
            assert!(back.apply_to_point(p).z.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_noise_has_requested_spread() {
        let mut cfg = DepthScanConfig::new(overhead(), 3000.0, 7);
        cfg.gaussian_sigma = 0.002;
        let c = render_depth(&plane(), &cfg).unwrap();
        assert!(c.len() >= 10_000);
        let back = cfg.camera_pose.inverse();
        let d: Vec<f64> = c.points().iter().map(|p| back.apply_to_point(p).z).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((0.0017..=0.0023).contains(&sd), "sd {sd}");
    }

    #[test]
    fn back_facing_patch_contributes_nothing() {
        let cfg = DepthScanConfig::new(overhead(), 500.0, 1);
        let under = Scene::new(vec![Patch::new("p", Vec3::new(-1.0, -1.0, 0.0), Vec3::y() * 2.0, Vec3::x() * 2.0).unwrap()])
            .unwrap();
        assert_eq!(render_depth(&under, &cfg).unwrap().len(), 0);
    }

    #[test]
    fn bow_peaks_at_center() {
        let mut cfg = DepthScanConfig::new(overhead(), 2000.0, 3);
        cfg.bow_amplitude = 0.004;
        let c = render_depth(&plane(), &cfg).unwrap();
        let back = cfg.camera_pose.inverse();
        for p in c.points() {
            let b = back.apply_to_point(p);
            let expect = 0.004 * (1.0 - 0.5 * (b.x * b.x + b.y * b.y));
            assert!((b.z - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_occluding() {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let mut cfg = DepthScanConfig::new(trial_extrinsic(), 20_000.0, 11);
        let a = render_depth(&scene, &cfg).unwrap();
        let b = render_depth(&scene, &cfg).unwrap();
        assert_eq!(a.points(), b.points());
        let cam = cfg.camera_position();
        let back = cfg.camera_pose.inverse();
        let table = scene.index_of("table_top").unwrap();
        for p in a.points() {
            let x = back.apply_to_point(p);
            if (x.z + 0.15).abs() < 1e-9 {
                assert!(!scene.segment_blocked(&x, &cam, table));
            }
        }
        cfg.occlusion = false;
        assert!(render_depth(&scene, &cfg).unwrap().len() > a.len());
    }
}
