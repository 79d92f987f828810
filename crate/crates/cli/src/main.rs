//! `contactcal`: simulate datasets, calibrate, analyze stability, study downsampling.
//!
//! Exit codes: 0 success, 1 error, 2 degenerate problem.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "contactcal", version, about = "Contact-based manipulator/depth-sensor calibration")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset: depth scan, joint logs, chain and ground truth.
    Simulate(SimulateArgs),
    /// Register the contact map to the depth scan, optionally solving joint biases.
    Calibrate(CalibrateArgs),
    /// Condition number of the registration Hessian for data or scene samplings.
    Stability(StabilityArgs),
    /// Registration error against ground truth as the contact map is thinned.
    DownsampleStudy(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` simulation config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Depth cloud in the camera frame (PLY or CSV).
    #[arg(long)]
    pub depth: PathBuf,
    /// Joint log CSV, one touch per row.
    #[arg(long)]
    pub joints: PathBuf,
    /// DH chain file.
    #[arg(long)]
    pub chain: PathBuf,
    /// `key = value` solver config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial extrinsic `x y z roll pitch yaw` (m, rad); overrides `initial_extrinsic` in the config.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Sensor position `x,y,z` in the depth frame, used to orient estimated normals.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub viewpoint: Option<Vec<f64>>,
    /// Ground-truth bundle to score the result against.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, requires_all = ["joints", "chain", "extrinsic"])]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub joints: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Extrinsic `x y z roll pitch yaw` (m, rad); the true pose in scene mode.
    #[arg(long)]
    pub extrinsic: Option<PathBuf>,
    /// Pairing config (ICP keys) for the data mode.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene mode: built-in layout.
    #[arg(long, conflicts_with_all = ["depth", "scene"])]
    pub preset: Option<String>,
    /// Scene mode: patch file.
    #[arg(long, conflicts_with = "depth")]
    pub scene: Option<PathBuf>,
    /// Scene mode: `label=patch1,patch2` (repeatable). Default: every visible patch.
    #[arg(long = "mask")]
    pub masks: Vec<String>,
    /// Scene mode: contact raster spacing (m).
    #[arg(long, default_value_t = 0.02)]
    pub spacing: f64,
    /// Analyze the identity matrix (expects c = 1).
    #[arg(long, conflicts_with_all = ["depth", "preset", "scene"])]
    pub self_test: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Dataset directory with `depth.ply`, `joints.csv` and `chain.txt`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Ground-truth bundle holding the true extrinsic.
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Initial extrinsic `x y z roll pitch yaw` (m, rad).
    #[arg(long)]
    pub initial: PathBuf,
    /// Comma-separated subset sizes.
    #[arg(long, value_delimiter = ',', default_value = "65000,5000,500,100,25")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ICP config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let start = Instant::now();
    let (name, out_dir, result) = match &cli.command {
        Command::Simulate(a) => ("simulate", a.out.clone(), commands::simulate(a)),
        Command::Calibrate(a) => ("calibrate", a.out.clone(), commands::calibrate(a)),
        Command::Stability(a) => ("stability", a.out.clone(), commands::stability(a)),
        Command::DownsampleStudy(a) => ("downsample-study", a.out.clone(), commands::downsample_study(a)),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if commands::is_degenerate(&e) { 2 } else { 1 });
        }
    };
    let code = match (&outcome.failure, outcome.degenerate) {
        (Some(msg), _) => {
            eprintln!("error: {msg}");
            1
        }
        (None, true) => 2,
        (None, false) => 0,
    };
    match finish(name, out_dir, outcome, start, code) {
        Ok(()) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn finish(name: &str, output_dir: PathBuf, o: Outcome, start: Instant, exit_code: i32) -> anyhow::Result<()> {
    let outputs = manifest::hash_outputs(&output_dir)?;
    RunManifest {
        command: name.to_string(),
        config: o.config,
        inputs: o.inputs,
        output_dir,
        seed: o.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        iterations: o.iterations,
        exit_code,
        metrics: o.metrics,
        outputs,
    }
    .write_atomic()
}
