use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::Scene;
use crate::error::{Error, Result};
use crate::Vec3;

/// Contact noise draws beyond this many sigmas are redrawn.
pub const NOISE_TRUNCATION: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ContactScanConfig {
    pub selected_patches: Vec<String>,
    pub raster_spacing: f64,
    /// End-effector height error along the surface normal (m).
    pub contact_noise_sigma: f64,
    /// Commanded contact force (N, negative = pressing).
    pub force_setpoint: f64,
    /// Weakest force that registers as contact (N).
    pub force_min: f64,
    /// Strongest force before the touch is aborted (N).
    pub force_max: f64,
    /// Spread of the measured force around the set point (N).
    pub force_sigma: f64,
    pub seed: u64,
}

impl ContactScanConfig {
    pub fn new(selected_patches: Vec<String>, raster_spacing: f64, seed: u64) -> Self {
        Self {
            selected_patches,
            raster_spacing,
            contact_noise_sigma: 0.001,
            force_setpoint: -4.0,
            force_min: -3.0,
            force_max: -15.0,
            force_sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected_patches.is_empty() {
            return Err(Error::EmptySelection);
        }
        if !(self.raster_spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("raster_spacing must be > 0, got {}", self.raster_spacing)));
        }
        if !(self.contact_noise_sigma >= 0.0) || !(self.force_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigmas must be >= 0".into()));
        }
        let (lo, sp, hi) = (self.force_min.abs(), self.force_setpoint.abs(), self.force_max.abs());
        if !(lo < sp && sp < hi) || self.force_min.signum() != self.force_max.signum() {
            return Err(Error::InvalidArgument(format!(
                "need |force_min| < |force_setpoint| < |force_max| with one sign, got {} / {} / {}",
                self.force_min, self.force_setpoint, self.force_max
            )));
        }
        Ok(())
    }

    /// Whether a measured force lies between the two thresholds.
    pub fn admits(&self, force: f64) -> bool {
        let (a, b) = (self.force_min.min(self.force_max), self.force_min.max(self.force_max));
        (a..=b).contains(&force)
    }
}

/// One admitted touch: where the tip ended up and the surface it touched.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedContact {
    pub patch: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub force: f64,
}

/// Raster the selected patches, simulate the force reading at each point, and
/// keep the admitted touches with the tip displaced along the normal.
///
/// Raster order is fixed first; point `k` then draws from its own RNG stream.
pub fn plan_contact_raster(scene: &Scene, cfg: &ContactScanConfig) -> Result<Vec<PlannedContact>> {
    cfg.validate()?;
    let raster = scene.raster_points(&cfg.selected_patches, cfg.raster_spacing)?;
    let force = Normal::new(cfg.force_setpoint, cfg.force_sigma).expect("sigma checked");
    let noise = Normal::new(0.0, cfg.contact_noise_sigma).expect("sigma checked");
    let planned: Vec<Option<PlannedContact>> = raster
        .par_iter()
        .enumerate()
        .map(|(k, &(patch, p))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let f = force.sample(&mut rng);
            if !cfg.admits(f) {
                return None;
            }
            let mut e = 0.0;
            if cfg.contact_noise_sigma > 0.0 {
                e = noise.sample(&mut rng);
                while e.abs() > NOISE_TRUNCATION * cfg.contact_noise_sigma {
                    e = noise.sample(&mut rng);
                }
            }
            let normal = scene.patches()[patch].normal();
            Some(PlannedContact {
                patch,
                point: p + normal * e,
                normal,
                force: f,
            })
        })
        .collect();
    Ok(planned.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

    fn table_cfg(spacing: f64, seed: u64) -> ContactScanConfig {
        ContactScanConfig::new(vec!["table_top".into()], spacing, seed)
    }

    #[test]
    fn admission_rate_matches_gaussian_tails() {
        let scene = Scene::preset("single_plane").unwrap();
        let cfg = table_cfg(0.008, 5);
        let raster = scene.raster_points(&cfg.selected_patches, cfg.raster_spacing).unwrap().len();
        assert!(raster >= 10_000, "{raster}");
        let admitted = plan_contact_raster(&scene, &cfg).unwrap().len();
        let phi = StdNormal::new(0.0, 1.0).unwrap();
        let expect = phi.cdf((-3.0 + 4.0) / 1.0) - phi.cdf((-15.0 + 4.0) / 1.0);
        let rate = admitted as f64 / raster as f64;
        assert!((rate - expect).abs() < 0.03, "rate {rate} expected {expect}");
    }

    #[test]
    fn contacts_stay_near_their_patch() {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let cfg = ContactScanConfig::new(
            vec!["table_top".into(), "big_top".into(), "big_py".into(), "small_nx".into()],
            0.02,
            9,
        );
        let pts = plan_contact_raster(&scene, &cfg).unwrap();
        assert!(!pts.is_empty());
        for c in &pts {
            let d = scene.patches()[c.patch].plane_distance(&c.point).abs();
            assert!(d <= NOISE_TRUNCATION * cfg.contact_noise_sigma && d <= 0.004 + 1e-12);
            assert!(cfg.admits(c.force));
        }
    }

    #[test]
    fn noiseless_contacts_lie_on_planes() {
        let scene = Scene::preset("orthogonal_triplet").unwrap();
        let mut cfg = ContactScanConfig::new(scene.labels(), 0.05, 2);
        cfg.contact_noise_sigma = 0.0;
        for c in plan_contact_raster(&scene, &cfg).unwrap() {
            assert!(scene.patches()[c.patch].plane_distance(&c.point).abs() < 1e-15);
        }
    }

    #[test]
    fn coarse_spacing_still_hits_each_patch() {
        let scene = Scene::preset("orthogonal_triplet").unwrap();
        let mut cfg = ContactScanConfig::new(scene.labels(), 10.0, 2);
        cfg.force_sigma = 0.0;
        let pts = plan_contact_raster(&scene, &cfg).unwrap();
        assert_eq!(pts.len(), 3);
    }

    #[test]
    fn parallel_face_distance_matches_prism_height() {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let cfg = ContactScanConfig::new(vec!["table_top".into(), "big_top".into()], 0.02, 4);
        let pts = plan_contact_raster(&scene, &cfg).unwrap();
        let mean_z = |patch: usize| {
            let z: Vec<f64> = pts.iter().filter(|c| c.patch == patch).map(|c| c.point.z).collect();
            (z.iter().sum::<f64>() / z.len() as f64, z.len())
        };
        let (top, n_top) = mean_z(scene.index_of("big_top").unwrap());
        let (table, n_table) = mean_z(scene.index_of("table_top").unwrap());
        let n = n_top.min(n_table) as f64;
        assert!(((top - table) - 0.345).abs() <= 3.0 * cfg.contact_noise_sigma / n.sqrt());
    }

    #[test]
    fn config_errors() {
        let scene = Scene::preset("single_plane").unwrap();
        assert!(matches!(
            plan_contact_raster(&scene, &ContactScanConfig::new(vec![], 0.1, 0)),
            Err(Error::EmptySelection)
        ));
        let mut cfg = table_cfg(0.1, 0);
        cfg.force_setpoint = -20.0;
        assert!(plan_contact_raster(&scene, &cfg).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let cfg = ContactScanConfig::new(vec!["table_top".into(), "big_top".into()], 0.03, 8);
        assert_eq!(plan_contact_raster(&scene, &cfg).unwrap(), plan_contact_raster(&scene, &cfg).unwrap());
    }
}
