//! Subcommand bodies. Each returns what the manifest needs; files go to `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use contactcal::calibration::CalibrationParams;
use contactcal::config::ConfigMap;
use contactcal::kinematics::{read_chain, read_joint_log};
use contactcal::report::{calibration_report, cost_history_csv, registration_report, write_text};
use contactcal::simulator::{
    generate_dataset, read_extrinsic, trial_extrinsic_params, ContactScanConfig, DepthScanConfig, GroundTruth,
    MotionConfig, Scene,
};
use contactcal::stability::{write_sampling_csv, SamplingRow, RANK_TOLERANCE};
use contactcal::study::study_csv;
use contactcal::{
    analyze, build_contact_cloud, calibrate as solve, compare_sampling, downsample_study as study,
    estimate_normals, identifiability_report, read_cloud, register, CalibrationConfig, CalibrationProblem, Error,
    ExtrinsicParams, IcpConfig, KinematicChain, PointCloud, SamplingMask,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CalibrateArgs, SimulateArgs, StabilityArgs, StudyArgs};

/// What a finished command reports to the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub degenerate: bool,
    /// Set when outputs were written but the run did not succeed.
    pub failure: Option<String>,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
}

/// Errors that mean "the data cannot pin the answer down" rather than "bad input".
pub fn is_degenerate(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<Error>(),
        Some(Error::DegenerateProblem { .. } | Error::DegenerateNormalEquations(_))
    )
}

const SIMULATE_KEYS: [&str; 17] = [
    "preset",
    "scene",
    "patches",
    "raster_spacing",
    "contact_noise_sigma",
    "force_setpoint",
    "force_min",
    "force_max",
    "force_sigma",
    "depth_density",
    "depth_sigma",
    "bow_amplitude",
    "occlusion",
    "extrinsic",
    "biases_deg",
    "motion",
    "chain",
];

/// Paths inside a config file are relative to the file.
fn resolve(config: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn extrinsic_key(cfg: &ConfigMap, key: &str) -> Result<Option<ExtrinsicParams>> {
    match cfg.get_floats(key)? {
        None => Ok(None),
        Some(v) if v.len() == 6 => Ok(Some(ExtrinsicParams::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]))),
        Some(v) => Err(Error::Config {
            key: key.into(),
            message: format!("expected 6 numbers `x y z roll pitch yaw`, found {}", v.len()),
        }
        .into()),
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let cfg = ConfigMap::read(&a.config)?;
    cfg.ensure_known(&SIMULATE_KEYS)?;
    let mut inputs = Vec::new();

    let scene = match cfg.raw("scene") {
        Some(p) => {
            let p = resolve(&a.config, p);
            inputs.push(p.clone());
            Scene::read(p)?
        }
        None => Scene::preset(cfg.raw("preset").unwrap_or("two_prisms_table"))?,
    };
    let chain = match cfg.raw("chain") {
        Some(p) => {
            let p = resolve(&a.config, p);
            inputs.push(p.clone());
            read_chain(p)?
        }
        None => KinematicChain::generic_six_dof(),
    };
    let extrinsic = extrinsic_key(&cfg, "extrinsic")?.unwrap_or_else(trial_extrinsic_params);
    let camera = extrinsic.to_transform().inverse().translation;
    let patches = cfg.get_list("patches").unwrap_or_else(|| scene.visible_from(&camera));
    if patches.is_empty() {
        return Err(Error::EmptySelection.into());
    }
    let biases: Vec<f64> = match cfg.get_floats("biases_deg")? {
        Some(v) if v.len() != chain.dof() => {
            return Err(Error::Config {
                key: "biases_deg".into(),
                message: format!("expected {} values, found {}", chain.dof(), v.len()),
            }
            .into())
        }
        Some(v) => v.iter().map(|d| d.to_radians()).collect(),
        None => vec![0.0; chain.dof()],
    };

    // Independent sub-streams, all derived from the one seed.
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (depth_seed, contact_seed, motion_seed): (u64, u64, u64) = (rng.random(), rng.random(), rng.random());

    let mut contact = ContactScanConfig::new(patches, cfg.get_or("raster_spacing", 0.02)?, contact_seed);
    contact.contact_noise_sigma = cfg.get_or("contact_noise_sigma", contact.contact_noise_sigma)?;
    contact.force_setpoint = cfg.get_or("force_setpoint", contact.force_setpoint)?;
    contact.force_min = cfg.get_or("force_min", contact.force_min)?;
    contact.force_max = cfg.get_or("force_max", contact.force_max)?;
    contact.force_sigma = cfg.get_or("force_sigma", contact.force_sigma)?;

    let mut depth = DepthScanConfig::new(extrinsic.to_transform(), cfg.get_or("depth_density", 20_000.0)?, depth_seed);
    depth.gaussian_sigma = cfg.get_or("depth_sigma", depth.gaussian_sigma)?;
    depth.bow_amplitude = cfg.get_or("bow_amplitude", depth.bow_amplitude)?;
    depth.occlusion = cfg.get_or("occlusion", depth.occlusion)?;

    let motion = match cfg.raw("motion").unwrap_or("varied") {
        "varied" => MotionConfig::varied(motion_seed),
        "fixed_wrist" => MotionConfig::fixed_wrist(motion_seed),
        other => {
            return Err(Error::Config {
                key: "motion".into(),
                message: format!("`{other}`: expected `varied` or `fixed_wrist`"),
            }
            .into())
        }
    };

    let d = generate_dataset(&scene, &depth, &contact, &chain, &extrinsic, &biases, &motion)?;
    if d.joint_logs.is_empty() {
        bail!("no reachable contacts in view of the camera");
    }
    create_dir(&a.out)?;
    d.write(&a.out, &chain)?;
    println!(
        "simulated {} contacts ({} hidden, {} unreachable), {} depth points -> {}",
        d.joint_logs.len(),
        d.hidden,
        d.ik_failures,
        d.depth.len(),
        a.out.display()
    );
    let metrics = BTreeMap::from([
        ("contacts".to_string(), d.joint_logs.len() as f64),
        ("hidden_contacts".to_string(), d.hidden as f64),
        ("ik_failures".to_string(), d.ik_failures as f64),
        ("depth_points".to_string(), d.depth.len() as f64),
    ]);
    Ok(Outcome {
        config: Some(a.config.clone()),
        inputs,
        seed: Some(a.seed),
        metrics,
        ..Outcome::default()
    })
}

fn read_config(path: Option<&Path>, known: &[&str]) -> Result<ConfigMap> {
    let cfg = match path {
        Some(p) => ConfigMap::read(p)?,
        None => ConfigMap::parse("", Path::new("<defaults>"))?,
    };
    cfg.ensure_known(known)?;
    Ok(cfg)
}

/// Depth cloud with normals; estimating them needs an explicit sensor position.
fn depth_with_normals(path: &Path, viewpoint: Option<&[f64]>, k: usize) -> Result<PointCloud> {
    let cloud = read_cloud(path)?;
    if cloud.normals().is_some() {
        return Ok(cloud);
    }
    let Some(v) = viewpoint else {
        bail!(
            "{} has no normals; pass --viewpoint x,y,z (sensor position in the depth frame) to estimate them",
            path.display()
        );
    };
    if v.len() != 3 {
        bail!("--viewpoint takes three numbers `x,y,z`, got {}", v.len());
    }
    Ok(estimate_normals(&cloud, k, &contactcal::Vec3::new(v[0], v[1], v[2]))?)
}

pub fn calibrate(a: &CalibrateArgs) -> Result<Outcome> {
    let mut known: Vec<&str> = IcpConfig::KEYS.to_vec();
    known.extend(CalibrationConfig::KEYS);
    known.extend(["solve_biases", "initial_extrinsic"]);
    let cfg = read_config(a.config.as_deref(), &known)?;
    let config = CalibrationConfig::from_config(&cfg)?;
    let solve_biases: bool = cfg.get_or("solve_biases", false)?;

    let initial = match &a.initial {
        Some(p) => read_extrinsic(p)?,
        None => extrinsic_key(&cfg, "initial_extrinsic")?
            .ok_or_else(|| anyhow!("no initial extrinsic: pass --initial or set `initial_extrinsic`"))?,
    };
    let chain = read_chain(&a.chain)?;
    let logs = read_joint_log(&a.joints)?;
    let depth = depth_with_normals(&a.depth, a.viewpoint.as_deref(), config.icp.normal_k)?;
    let contact = build_contact_cloud(&chain, &logs)?;

    let mut inputs = vec![a.depth.clone(), a.joints.clone(), a.chain.clone()];
    inputs.extend(a.initial.clone());

    let icp = register(&contact, &depth, &initial.to_transform(), &config.icp)?;
    let stab = analyze(&icp.centered_hessian, RANK_TOLERANCE)?;
    let raw = analyze(&icp.hessian, RANK_TOLERANCE)?;
    let rigid = ExtrinsicParams::from_transform(&icp.transform)?;
    create_dir(&a.out)?;
    write_text(a.out.join("registration.txt"), &registration_report(&rigid, &icp, &stab, raw.condition_number))?;

    let mut metrics = BTreeMap::from([
        ("rigid_cost".to_string(), icp.final_cost),
        ("rigid_iterations".to_string(), icp.iterations as f64),
        ("rigid_rank".to_string(), stab.numeric_rank as f64),
        ("condition_number".to_string(), stab.condition_number),
    ]);
    let mut degenerate = false;
    if let Some(d) = &icp.degeneracy {
        let labels: Vec<&str> = d.null_directions.iter().map(|n| n.label.as_str()).collect();
        eprintln!("degenerate: rigid registration is rank {} (of 6): {}", d.rank, labels.join(", "));
        degenerate = true;
    } else if !stab.is_full_rank() {
        eprintln!("degenerate: stability Hessian is rank {} (of 6)", stab.numeric_rank);
        degenerate = true;
    }
    println!("rigid: extrinsic {rigid}, cost {:e}, {} iterations", icp.final_cost, icp.iterations);
    let mut failure = (!degenerate && !icp.converged)
        .then(|| format!("rigid registration did not converge in {} iterations", icp.iterations));

    let mut iterations = icp.iterations;
    let mut history = icp.cost_history.clone();
    let mut final_extrinsic = rigid;
    let mut final_biases = vec![0.0; chain.dof()];
    if solve_biases && !degenerate && failure.is_none() {
        let problem = CalibrationProblem::new(&chain, logs, depth, initial, true, config)?;
        let result = solve(&problem)?;
        let params = CalibrationParams::new(result.transform.clone(), result.joint_biases.clone());
        let id = identifiability_report(&problem, &params, RANK_TOLERANCE)?;
        write_text(a.out.join("calibration.txt"), &calibration_report(&result, Some(&id)))?;
        if let Some(d) = &result.degeneracy {
            let labels: Vec<&str> = d.null_directions.iter().map(|n| n.label.as_str()).collect();
            eprintln!("degenerate: joint-bias solve rejected: {}", labels.join("; "));
            degenerate = true;
        }
        println!(
            "joint: extrinsic {}, biases (deg) {:?}, cost {:e}, {} iterations",
            result.extrinsic,
            result.joint_biases.iter().map(|b| b.to_degrees()).collect::<Vec<_>>(),
            result.final_cost,
            result.iterations
        );
        if !result.converged && !degenerate {
            failure = Some(format!("joint solve did not converge in {} iterations", result.iterations));
        }
        metrics.insert("joint_cost".into(), result.final_cost);
        metrics.insert("joint_iterations".into(), result.iterations as f64);
        iterations = result.iterations;
        history = result.history.clone();
        final_extrinsic = result.extrinsic;
        final_biases = result.joint_biases.clone();
    }
    write_text(a.out.join("cost_history.csv"), &cost_history_csv(&history))?;

    if let Some(gt) = &a.ground_truth {
        let truth = GroundTruth::read(gt)?;
        let (rot, trans) = final_extrinsic.to_transform().distance_to(&truth.extrinsic.to_transform());
        let mut s = String::new();
        s.push_str(&format!("translation_error_m {trans}\nrotation_error_deg {}\n", rot.to_degrees()));
        if truth.biases.len() == final_biases.len() {
            let err: Vec<String> = final_biases
                .iter()
                .zip(&truth.biases)
                .map(|(b, t)| (b - t).to_degrees().to_string())
                .collect();
            s.push_str(&format!("bias_error_deg {}\n", err.join(" ")));
        }
        write_text(a.out.join("evaluation.txt"), &s)?;
        println!("error vs ground truth: {:.3} mm, {:.4} deg", trans * 1e3, rot.to_degrees());
        metrics.insert("translation_error_m".into(), trans);
        metrics.insert("rotation_error_deg".into(), rot.to_degrees());
        inputs.push(gt.clone());
    }

    Ok(Outcome {
        degenerate,
        failure,
        config: a.config.clone(),
        inputs,
        seed: None,
        iterations: Some(iterations),
        metrics,
    })
}

fn parse_mask(spec: &str) -> Result<SamplingMask> {
    let (label, list) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("mask `{spec}`: expected `label=patch1,patch2`"))?;
    let patches: Vec<String> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if patches.is_empty() {
        bail!("mask `{label}` selects no patches");
    }
    Ok(SamplingMask::new(label.trim(), patches))
}

pub fn stability(a: &StabilityArgs) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let mut degenerate = false;
    let rows: Vec<SamplingRow> = if a.self_test {
        let report = analyze(&contactcal::Mat6::identity(), RANK_TOLERANCE)?;
        vec![SamplingRow {
            label: "identity".into(),
            points: 0,
            raw_condition_number: report.condition_number,
            report,
        }]
    } else if let Some(depth_path) = &a.depth {
        let (joints, chain, extrinsic) = (
            a.joints.as_ref().expect("required by clap"),
            a.chain.as_ref().expect("required by clap"),
            a.extrinsic.as_ref().expect("required by clap"),
        );
        let cfg = read_config(a.config.as_deref(), &IcpConfig::KEYS)?;
        let icp = IcpConfig::from_config(&cfg)?;
        let depth = depth_with_normals(depth_path, None, icp.normal_k)?;
        let contact = build_contact_cloud(&read_chain(chain)?, &read_joint_log(joints)?)?;
        let t = read_extrinsic(extrinsic)?.to_transform();
        inputs.extend([depth_path.clone(), joints.clone(), chain.clone(), extrinsic.clone()]);
        let index = contactcal::NeighborIndex::build_active(&depth)?;
        let corrs = contactcal::find_correspondences(&contact, &depth, &index, &t, &icp)?;
        let report = analyze(&contactcal::stability::assemble_centered_hessian(&corrs, &t, &contact)?, RANK_TOLERANCE)?;
        let raw = analyze(&contactcal::assemble_hessian(&corrs, &t, &contact)?, RANK_TOLERANCE)?;
        if !report.is_full_rank() {
            eprintln!("degenerate: rank {} (of 6)", report.numeric_rank);
            degenerate = true;
        }
        vec![SamplingRow {
            label: "data".into(),
            points: corrs.iter().filter(|c| c.weight == 1.0).count(),
            report,
            raw_condition_number: raw.condition_number,
        }]
    } else {
        let scene = match (&a.preset, &a.scene) {
            (_, Some(p)) => {
                inputs.push(p.clone());
                Scene::read(p)?
            }
            (Some(name), None) => Scene::preset(name)?,
            (None, None) => bail!("pass --depth (with --joints, --chain, --extrinsic), --preset, --scene or --self-test"),
        };
        let truth = match &a.extrinsic {
            Some(p) => {
                inputs.push(p.clone());
                read_extrinsic(p)?
            }
            None => trial_extrinsic_params(),
        }
        .to_transform();
        let masks = if a.masks.is_empty() {
            vec![SamplingMask::new("all", scene.visible_from(&truth.inverse().translation))]
        } else {
            a.masks.iter().map(|m| parse_mask(m)).collect::<Result<_>>()?
        };
        compare_sampling(&scene, &masks, a.spacing, &truth)?
    };

    create_dir(&a.out)?;
    write_sampling_csv(&rows, a.out.join("stability.csv"))?;
    let mut metrics = BTreeMap::new();
    for r in &rows {
        println!("{}: {} points, rank {}, c = {}", r.label, r.points, r.report.numeric_rank, r.report.condition_number);
        // JSON has no infinity; rank-deficient rows are reported by rank alone.
        if r.report.condition_number.is_finite() {
            metrics.insert(format!("c_{}", r.label), r.report.condition_number);
        }
        metrics.insert(format!("rank_{}", r.label), r.report.numeric_rank as f64);
    }
    Ok(Outcome {
        degenerate,
        config: a.config.clone(),
        inputs,
        metrics,
        ..Outcome::default()
    })
}

pub fn downsample_study(a: &StudyArgs) -> Result<Outcome> {
    let cfg = read_config(a.config.as_deref(), &IcpConfig::KEYS)?;
    let icp = IcpConfig::from_config(&cfg)?;
    let depth_path = a.dataset.join("depth.ply");
    let depth = depth_with_normals(&depth_path, None, icp.normal_k)?;
    let chain = read_chain(a.dataset.join("chain.txt"))?;
    let contact = build_contact_cloud(&chain, &read_joint_log(a.dataset.join("joints.csv"))?)?;
    let initial = read_extrinsic(&a.initial)?.to_transform();
    let truth = GroundTruth::read(&a.ground_truth)?.extrinsic.to_transform();

    let rows = study(&contact, &depth, &initial, &truth, &a.counts, a.trials, a.seed, &icp)?;
    create_dir(&a.out)?;
    write_text(a.out.join("downsample_study.csv"), &study_csv(&rows))?;
    let mut metrics = BTreeMap::new();
    for r in &rows {
        println!(
            "{:>6} points: {:.3} +/- {:.3} mm, {:.4} +/- {:.4} deg, {} failed",
            r.count,
            r.translation_mean * 1e3,
            r.translation_std * 1e3,
            r.rotation_mean.to_degrees(),
            r.rotation_std.to_degrees(),
            r.failures
        );
        metrics.insert(format!("translation_mean_{}", r.count), r.translation_mean);
    }
    Ok(Outcome {
        config: a.config.clone(),
        inputs: vec![a.dataset.clone(), a.ground_truth.clone(), a.initial.clone()],
        seed: Some(a.seed),
        metrics,
        ..Outcome::default()
    })
}
