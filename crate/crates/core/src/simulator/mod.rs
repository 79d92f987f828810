//! Synthetic ground truth: planar scenes, depth scans, contact rasters, IK.
//!
//! [`generate_dataset`] solves IK on the *true* chain (biases applied) and
//! records the commanded joint angles, so a consumer using the nominal chain
//! sees exactly the miscalibrated contact map a real system would produce.

mod contact;
mod depth;
mod ik;
mod scene;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use contact::{plan_contact_raster, ContactScanConfig, PlannedContact, NOISE_TRUNCATION};
pub use depth::{render_depth, DepthScanConfig};
pub use ik::{solve_ik, IkConfig, IkSolution};
pub use scene::{Patch, Scene, PRESETS};

use crate::error::{Error, Result};
use crate::kinematics::{read_joint_log, write_chain, write_joint_log, JointState, KinematicChain};
use crate::pointcloud::{write_cloud, PointCloud};
use crate::se3::{ExtrinsicParams, RigidTransform};
use crate::Vec3;

/// Extrinsic of the first physical trial: (839.4, 257.3, 676.6) mm, (-119.07, 1.00, 16.23) deg.
pub fn trial_extrinsic_params() -> ExtrinsicParams {
    ExtrinsicParams::from_degrees(0.8394, 0.2573, 0.6766, -119.07, 1.00, 16.23)
}

pub fn trial_extrinsic() -> RigidTransform {
    trial_extrinsic_params().to_transform()
}

/// Hand-measured starting guess from the same trial: (800, 300, 600) mm, (-125, 0, 0) deg.
pub fn hand_measured_guess() -> ExtrinsicParams {
    ExtrinsicParams::from_degrees(0.8, 0.3, 0.6, -125.0, 0.0, 0.0)
}

/// How the arm reaches the raster points.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionConfig {
    pub ik: IkConfig,
    /// Starting configuration for the per-patch continuation.
    pub home: JointState,
    /// Half-width of the uniform per-point perturbation of the patch seed, per joint (rad).
    pub seed_jitter: Vec<f64>,
    pub seed: u64,
}

impl MotionConfig {
    /// Wrist reorients freely between touches (wide configuration spread).
    pub fn varied(seed: u64) -> Self {
        Self {
            ik: IkConfig::default(),
            home: home_configuration(),
            seed_jitter: vec![0.15, 0.1, 0.15, 1.2, 0.6, 1.2],
            seed,
        }
    }

    /// Wrist joints locked at the home values; only the first three joints move.
    pub fn fixed_wrist(seed: u64) -> Self {
        Self {
            ik: IkConfig {
                locked_joints: vec![3, 4, 5],
                require_alignment: false,
                ..IkConfig::default()
            },
            home: home_configuration(),
            seed_jitter: vec![0.0; 6],
            seed,
        }
    }
}

/// Tool pointing down over the middle of the preset table.
pub fn home_configuration() -> JointState {
    JointState::new(vec![-0.35, -0.75, 1.55, -2.35, -1.57, 0.5])
}

/// Everything needed to score a calibration; never read by the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub extrinsic: ExtrinsicParams,
    pub biases: Vec<f64>,
    pub scene: Scene,
}

impl GroundTruth {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("extrinsic.txt");
        fs::write(&p, format!("{}\n", self.extrinsic)).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("biases.csv");
        let mut s = String::from("joint,bias_rad\n");
        for (k, b) in self.biases.iter().enumerate() {
            s.push_str(&format!("{},{b}\n", k + 1));
        }
        fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        self.scene.write(dir.join("patches.txt"))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let extrinsic = read_extrinsic(dir.join("extrinsic.txt"))?;
        let p = dir.join("biases.csv");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let mut biases = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v = line
                .split(',')
                .nth(1)
                .and_then(|t| t.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::parse(&p, i + 1, "expected `joint,bias_rad`"))?;
            biases.push(v);
        }
        Ok(Self {
            extrinsic,
            biases,
            scene: Scene::read(dir.join("patches.txt"))?,
        })
    }
}

/// Six numbers `x y z roll pitch yaw` (m, rad) on the first non-comment line,
/// optionally after an `extrinsic` keyword (so report files work too).
pub fn read_extrinsic(path: impl AsRef<Path>) -> Result<ExtrinsicParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line = line.strip_prefix("extrinsic").unwrap_or(line);
        let v: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "expected 6 numbers"))?;
        if v.len() != 6 {
            return Err(Error::parse(path, i + 1, format!("expected 6 numbers, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue {
                path: path.to_path_buf(),
                line: i + 1,
            });
        }
        return Ok(ExtrinsicParams::new(v[0], v[1], v[2], v[3], v[4], v[5]));
    }
    Err(Error::parse(path, 1, "no extrinsic line"))
}

pub fn write_extrinsic(e: &ExtrinsicParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format!("{e}\n")).map_err(|err| Error::io(path, err))
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// Camera-frame depth cloud with normals.
    pub depth: PointCloud,
    /// Recorded joint angles, one per admitted and reachable contact.
    pub joint_logs: Vec<JointState>,
    /// The touches behind `joint_logs`, in the same order.
    pub contacts: Vec<PlannedContact>,
    /// Admitted touches dropped because the camera cannot see them.
    pub hidden: usize,
    /// Admitted touches dropped because IK failed.
    pub ik_failures: usize,
    pub truth: GroundTruth,
}

impl Dataset {
    /// `depth.ply`, `joints.csv`, `chain.txt` and `ground_truth/`.
    pub fn write(&self, dir: impl AsRef<Path>, nominal: &KinematicChain) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cloud(&self.depth, dir.join("depth.ply"))?;
        write_joint_log(&self.joint_logs, nominal.dof(), dir.join("joints.csv"))?;
        write_chain(&nominal.nominal(), dir.join("chain.txt"))?;
        self.truth.write(dir.join("ground_truth"))
    }
}

/// Whether the touched surface point is in direct view of `camera` (base frame).
pub fn seen_from(scene: &Scene, contact: &PlannedContact, camera: &Vec3) -> bool {
    let p = &scene.patches()[contact.patch];
    p.normal().dot(&(camera - contact.point)) > 0.0 && !scene.segment_blocked(&contact.point, camera, contact.patch)
}

/// Depth scan plus joint logs for the admitted raster touches.
///
/// The depth scan uses `true_extrinsic` as its camera pose (overriding
/// `depth_cfg.camera_pose`). IK is solved per patch by continuation from
/// `motion.home`, then per point from a jittered copy of the patch solution,
/// each point on its own RNG stream. Touches hidden from the camera and
/// unreachable touches are counted and skipped.
pub fn generate_dataset(
    scene: &Scene,
    depth_cfg: &DepthScanConfig,
    contact_cfg: &ContactScanConfig,
    chain: &KinematicChain,
    true_extrinsic: &ExtrinsicParams,
    true_biases: &[f64],
    motion: &MotionConfig,
) -> Result<Dataset> {
    let truth_chain = chain.nominal().with_biases(true_biases)?;
    if motion.seed_jitter.len() != chain.dof() || motion.home.len() != chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: chain.dof(),
            found: motion.seed_jitter.len().min(motion.home.len()),
            record: None,
        });
    }
    let depth_cfg = DepthScanConfig {
        camera_pose: true_extrinsic.to_transform(),
        ..depth_cfg.clone()
    };
    let depth = render_depth(scene, &depth_cfg)?;
    let camera = depth_cfg.camera_position();
    let admitted = plan_contact_raster(scene, contact_cfg)?;
    let total = admitted.len();
    // Touches are only worth making where the sensor sees the surface.
    let planned: Vec<PlannedContact> = admitted
        .into_iter()
        .filter(|c| seen_from(scene, c, &camera))
        .collect();
    let hidden = total - planned.len();

    // Per-patch seeds by continuation, in raster order.
    let mut patch_seed: Vec<Option<JointState>> = vec![None; scene.patches().len()];
    let mut current = motion.home.clone();
    for c in &planned {
        if patch_seed[c.patch].is_some() {
            continue;
        }
        let p = &scene.patches()[c.patch];
        let target = p.center();
        let tries = [current.clone(), motion.home.clone()];
        let sol = tries
            .iter()
            .find_map(|s| solve_ik(&truth_chain, &target, &p.normal(), s, &motion.ik).ok());
        if let Some(sol) = sol {
            current = sol.joints.clone();
            patch_seed[c.patch] = Some(sol.joints);
        }
    }

    let solved: Vec<Option<JointState>> = planned
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let base = patch_seed[c.patch].as_ref()?;
            let mut rng = ChaCha8Rng::seed_from_u64(motion.seed);
            rng.set_stream(k as u64);
            let jitter: Vec<f64> = motion
                .seed_jitter
                .iter()
                .map(|&a| if a > 0.0 { rng.random_range(-a..a) } else { 0.0 })
                .collect();
            let locked = &motion.ik.locked_joints;
            let jitter: Vec<f64> = jitter
                .iter()
                .enumerate()
                .map(|(j, &x)| if locked.contains(&j) { 0.0 } else { x })
                .collect();
            let seed = base.offset(&jitter);
            solve_ik(&truth_chain, &c.point, &c.normal, &seed, &motion.ik)
                .or_else(|_| solve_ik(&truth_chain, &c.point, &c.normal, base, &motion.ik))
                .ok()
                .map(|s| s.joints)
        })
        .collect();

    let mut joint_logs = Vec::new();
    let mut contacts = Vec::new();
    let mut ik_failures = 0;
    for (c, s) in planned.into_iter().zip(solved) {
        match s {
            Some(q) => {
                joint_logs.push(q);
                contacts.push(c);
            }
            None => ik_failures += 1,
        }
    }
    Ok(Dataset {
        depth,
        joint_logs,
        contacts,
        hidden,
        ik_failures,
        truth: GroundTruth {
            extrinsic: *true_extrinsic,
            biases: true_biases.to_vec(),
            scene: scene.clone(),
        },
    })
}

/// Reload the joint logs written by [`Dataset::write`].
pub fn read_dataset_logs(dir: impl AsRef<Path>) -> Result<Vec<JointState>> {
    read_joint_log(dir.as_ref().join("joints.csv"))
}

/// Per-joint `max - min` of the logged angles (rad).
pub fn configuration_spread(logs: &[JointState]) -> Vec<f64> {
    let Some(first) = logs.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|j| {
            let (lo, hi) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                (lo.min(q.angles()[j]), hi.max(q.angles()[j]))
            });
            hi - lo
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::build_contact_cloud;

    fn small_dataset(biases: &[f64], noise: bool) -> Dataset {
        let scene = Scene::preset("two_prisms_table").unwrap();
        let mut depth = DepthScanConfig::new(trial_extrinsic(), 2000.0, 1);
        let mut contact = ContactScanConfig::new(
            vec!["table_top".into(), "big_top".into(), "big_py".into(), "big_nx".into(), "small_nx".into()],
            0.06,
            2,
        );
        if !noise {
            contact.contact_noise_sigma = 0.0;
        } else {
            depth.gaussian_sigma = 0.002;
        }
        generate_dataset(
            &scene,
            &depth,
            &contact,
            &KinematicChain::generic_six_dof(),
            &trial_extrinsic_params(),
            biases,
            &MotionConfig::varied(3),
        )
        .unwrap()
    }

    #[test]
    fn unbiased_noiseless_contacts_lie_on_surfaces() {
        let d = small_dataset(&[0.0; 6], false);
        assert!(d.joint_logs.len() > 50, "{} logs, {} failures", d.joint_logs.len(), d.ik_failures);
        let cloud = build_contact_cloud(&KinematicChain::generic_six_dof(), &d.joint_logs).unwrap();
        for (p, c) in cloud.points().iter().zip(&d.contacts) {
            assert!(d.truth.scene.patches()[c.patch].plane_distance(p).abs() < 1e-6);
        }
    }

    #[test]
    fn joint_four_bias_deforms_contact_map() {
        let mut b = [0.0; 6];
        b[3] = 29f64.to_radians();
        let d = small_dataset(&b, false);
        let chain = KinematicChain::generic_six_dof();
        let seen = build_contact_cloud(&chain, &d.joint_logs).unwrap();
        let real = build_contact_cloud(&chain.with_biases(&b).unwrap(), &d.joint_logs).unwrap();
        let max = seen
            .points()
            .iter()
            .zip(real.points())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max > 0.05, "{max}");
    }

    #[test]
    fn files_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let chain = KinematicChain::generic_six_dof();
        small_dataset(&[0.0; 6], true).write(a.path(), &chain).unwrap();
        small_dataset(&[0.0; 6], true).write(b.path(), &chain).unwrap();
        for f in ["depth.ply", "joints.csv", "chain.txt", "ground_truth/extrinsic.txt", "ground_truth/biases.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let truth = GroundTruth::read(a.path().join("ground_truth")).unwrap();
        assert_eq!(truth.biases, vec![0.0; 6]);
        assert!((truth.extrinsic.yaw - trial_extrinsic_params().yaw).abs() < 1e-15);
        assert_eq!(read_dataset_logs(a.path()).unwrap().len(), small_dataset(&[0.0; 6], true).joint_logs.len());
    }

    #[test]
    fn extrinsic_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        fs::write(&p, "# x y z r p y\n1 2 3\n").unwrap();
        assert!(matches!(read_extrinsic(&p), Err(Error::Parse { line: 2, .. })));
        write_extrinsic(&hand_measured_guess(), &p).unwrap();
        let back = read_extrinsic(&p).unwrap();
        assert_eq!(back, hand_measured_guess());
    }
}
