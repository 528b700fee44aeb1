//! Command-line driver: simulate -> run -> eval workflows with reproducible
//! configuration. Every subcommand writes its resolved configuration next to
//! its outputs.
//!
//! Exit codes: 0 success, 1 validation/usage, 2 numerical failure, 3 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rff_slam::error::Error;
use rff_slam::estimator::SolverConfig;
use rff_slam::io::{self, Dataset, DatasetFormat, LoadOptions};
use rff_slam::observation::MeasurementKind;
use rff_slam::pipeline::{self, PriorChoice, RunOptions};
use rff_slam::sim::{self, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "rff-slam",
    version,
    about = "Continuous-time trajectory estimation and mapping with random Fourier feature GPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenarios (trajectory, landmarks, measurements, odometry).
    Simulate(SimulateArgs),
    /// Estimate a trajectory and landmarks from a dataset.
    Run(RunArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval(EvalArgs),
    /// Simulate, run and evaluate over a seed/noise grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Base scenario seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit this many scenarios (seed, seed+1, ...), one directory each.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 20)]
    num_landmarks: usize,
    /// Scenario length, seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Measurement period, seconds.
    #[arg(long, default_value_t = 0.5)]
    cadence: f64,
    /// Range noise std, meters.
    #[arg(long, default_value_t = 2.0)]
    range_noise: f64,
    /// Bearing noise std, degrees.
    #[arg(long, default_value_t = 3.0)]
    bearing_noise_deg: f64,
    /// Measurement kind: range, bearing or range_bearing.
    #[arg(long, default_value = "range_bearing")]
    kind: String,
    /// Optional sensor range limit, meters.
    #[arg(long)]
    max_range: Option<f64>,
    /// Odometry linear velocity noise std, m/s.
    #[arg(long, default_value_t = 0.02)]
    odom_noise_v: f64,
    /// Odometry angular velocity noise std, rad/s.
    #[arg(long, default_value_t = 0.005)]
    odom_noise_w: f64,
}

/// Solver and run settings resolved from an optional config file plus flag
/// overrides; serialized next to outputs for provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunSettings {
    solver: SolverConfig,
    prior: PriorChoice,
    batch_size: Option<usize>,
    kind_filter: Option<MeasurementKind>,
    min_noise_std: f64,
    range_sigma: Option<f64>,
    bearing_sigma: Option<f64>,
    landmark_prior_sigma: f64,
    subsample_landmarks: Option<usize>,
    subsample_seed: u64,
    min_landmarks_per_keyframe: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            prior: PriorChoice::Spline,
            batch_size: None,
            kind_filter: None,
            min_noise_std: 1e-3,
            range_sigma: None,
            bearing_sigma: None,
            landmark_prior_sigma: 100.0,
            subsample_landmarks: None,
            subsample_seed: 0,
            min_landmarks_per_keyframe: 10,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Dataset path (a file, or a directory for the plaza format).
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset format: canonical, plaza or bearing_csv.
    #[arg(long, default_value = "canonical")]
    format: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON config file with defaults; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prior mean model: motion, spline, zero or truth.
    #[arg(long)]
    prior: Option<String>,
    /// Measurements per incremental batch (omit to solve once over all).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Restrict measurements to one kind (projecting range_bearing rows).
    #[arg(long)]
    kind_filter: Option<String>,
    /// Noise floor applied to measurement stds.
    #[arg(long)]
    min_noise_std: Option<f64>,
    /// Number of random features D.
    #[arg(long)]
    features: Option<usize>,
    /// Kernel lengthscale.
    #[arg(long)]
    lengthscale: Option<f64>,
    /// Frequency sampler seed.
    #[arg(long)]
    basis_seed: Option<u64>,
    /// Time scaling applied before the kernel.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Weight prior covariance scale.
    #[arg(long)]
    weight_prior_scale: Option<f64>,
    /// Landmark prior covariance (when no prior is supplied).
    #[arg(long)]
    landmark_prior_cov: Option<f64>,
    /// Initial LM damping.
    #[arg(long)]
    lm_lambda0: Option<f64>,
    /// Relative objective tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Maximum LM iterations per batch.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// CG relative residual target.
    #[arg(long)]
    cg_tolerance: Option<f64>,
    /// CG iteration cap.
    #[arg(long)]
    cg_max_iter: Option<usize>,
    /// Range sigma for formats that do not record noise.
    #[arg(long)]
    range_sigma: Option<f64>,
    /// Bearing sigma for formats that do not record noise.
    #[arg(long)]
    bearing_sigma: Option<f64>,
    /// Std assigned to landmark priors synthesized by loaders.
    #[arg(long)]
    landmark_prior_sigma: Option<f64>,
    /// Ground-truth CSV (t,x,y,heading) merged into the dataset.
    #[arg(long)]
    gt_csv: Option<PathBuf>,
    /// Subsample to this many landmarks (bearing files with weights).
    #[arg(long)]
    subsample_landmarks: Option<usize>,
    /// Seed of the landmark subsampler.
    #[arg(long)]
    subsample_seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunSettings, Error> {
        let mut s = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str::<RunSettings>(&text)
                    .map_err(|e| Error::invalid(format!("bad config file: {e}")))?
            }
            None => RunSettings::default(),
        };
        if let Some(p) = &self.prior {
            s.prior = PriorChoice::parse(p)?;
        }
        if let Some(k) = &self.kind_filter {
            s.kind_filter = Some(MeasurementKind::parse(k)?);
        }
        if self.batch_size.is_some() {
            s.batch_size = self.batch_size;
        }
        if let Some(v) = self.min_noise_std {
            s.min_noise_std = v;
        }
        if let Some(v) = self.features {
            s.solver.num_features = v;
        }
        if let Some(v) = self.lengthscale {
            s.solver.lengthscale = v;
        }
        if let Some(v) = self.basis_seed {
            s.solver.basis_seed = v;
        }
        if let Some(v) = self.time_scale {
            s.solver.time_scale = v;
        }
        if let Some(v) = self.weight_prior_scale {
            s.solver.weight_prior_scale = v;
        }
        if let Some(v) = self.landmark_prior_cov {
            s.solver.landmark_prior_cov = v;
        }
        if let Some(v) = self.lm_lambda0 {
            s.solver.lm_lambda_init = v;
        }
        if let Some(v) = self.tolerance {
            s.solver.tolerance = v;
        }
        if let Some(v) = self.max_iterations {
            s.solver.max_iterations = v;
        }
        if let Some(v) = self.cg_tolerance {
            s.solver.cg_tolerance = v;
        }
        if self.cg_max_iter.is_some() {
            s.solver.cg_max_iter = self.cg_max_iter;
        }
        if self.range_sigma.is_some() {
            s.range_sigma = self.range_sigma;
        }
        if self.bearing_sigma.is_some() {
            s.bearing_sigma = self.bearing_sigma;
        }
        if let Some(v) = self.landmark_prior_sigma {
            s.landmark_prior_sigma = v;
        }
        if self.subsample_landmarks.is_some() {
            s.subsample_landmarks = self.subsample_landmarks;
        }
        if let Some(v) = self.subsample_seed {
            s.subsample_seed = v;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated trajectory CSV (t,x,y,heading).
    #[arg(long)]
    estimate: PathBuf,
    /// Ground-truth trajectory CSV (t,x,y,heading).
    #[arg(long)]
    truth: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Scenarios per grid cell.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Range noise grid, meters.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    range_noises: Vec<f64>,
    /// Bearing noise grid, degrees.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    bearing_noises_deg: Vec<f64>,
    /// Measurement kinds to sweep.
    #[arg(long, value_delimiter = ',', default_value = "range_bearing")]
    kinds: Vec<String>,
    /// Landmark-count grid.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    landmark_counts: Vec<usize>,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0.5)]
    cadence: f64,
    /// Run this many scenarios concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_scenarios: usize,
    /// JSON config file with solver/run defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prior mean model for the runs.
    #[arg(long, default_value = "motion")]
    prior: String,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    lengthscale: Option<f64>,
    #[arg(long)]
    weight_prior_scale: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Validation(_) | Error::Parse { .. } => 1,
        Error::NumericalFailure { .. } | Error::DegenerateGeometry { .. } => 2,
        Error::Io { .. } => 3,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn scenario_to_dataset(scenario: &sim::Scenario, config: &ScenarioConfig) -> Dataset {
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("scenario_seed".into(), config.seed.to_string());
    metadata.insert(
        "measurement_kind".into(),
        config.measurement_kind.as_str().to_string(),
    );
    Dataset {
        ground_truth: Some(scenario.ground_truth.clone()),
        odometry: scenario.odometry.clone(),
        measurements: scenario.measurements.clone(),
        landmark_priors: Vec::new(),
        metadata,
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let base = ScenarioConfig {
        seed: args.seed,
        num_landmarks: args.num_landmarks,
        duration: args.duration,
        cadence: args.cadence,
        range_noise_std: args.range_noise,
        bearing_noise_std: args.bearing_noise_deg.to_radians(),
        measurement_kind: MeasurementKind::parse(&args.kind)?,
        sensor_max_range: args.max_range,
        odometry_linear_noise_std: args.odom_noise_v,
        odometry_angular_noise_std: args.odom_noise_w,
    };
    base.validate()?;
    for offset in 0..args.seeds.max(1) {
        let config = ScenarioConfig {
            seed: args.seed + offset,
            ..base.clone()
        };
        let dir = if args.seeds > 1 {
            args.out.join(format!("seed_{}", config.seed))
        } else {
            args.out.clone()
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let scenario = sim::generate_scenario(&config)?;
        io::save_dataset(
            &scenario_to_dataset(&scenario, &config),
            &dir.join("scenario.txt"),
        )?;
        io::save_landmarks_csv(&scenario.landmarks, &dir.join("landmarks_truth.csv"))?;
        write_json(&config, &dir.join("config.json"))?;
        println!(
            "simulate: seed {} -> {} measurements, {} landmarks, {}",
            config.seed,
            scenario.measurements.len(),
            scenario.landmarks.len(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let settings = args.resolve()?;
    let format = DatasetFormat::parse(&args.format)?;
    let load_options = LoadOptions {
        range_sigma: settings.range_sigma,
        bearing_sigma: settings.bearing_sigma,
        landmark_prior_sigma: settings.landmark_prior_sigma,
        landmark_subsample: settings
            .subsample_landmarks
            .map(|n| (n, settings.subsample_seed)),
        min_landmarks_per_keyframe: settings.min_landmarks_per_keyframe,
        ground_truth_csv: args.gt_csv.clone(),
    };
    let dataset = io::load_dataset(&args.dataset, format, &load_options)?;

    let options = RunOptions {
        solver: settings.solver.clone(),
        prior: settings.prior,
        batch_size: settings.batch_size,
        kind_filter: settings.kind_filter,
        min_noise_std: settings.min_noise_std,
        ..RunOptions::default()
    };
    let output = pipeline::run_dataset(&dataset, &options)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&settings, &args.out.join("config.json"))?;
    io::save_trajectory_csv(&output.trajectory, &args.out.join("trajectory.csv"))?;
    io::save_landmarks_csv(&output.landmarks, &args.out.join("landmarks.csv"))?;

    let mut log = String::new();
    for report in &output.batch_reports {
        log.push_str(
            &serde_json::to_string(report)
                .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?,
        );
        log.push('\n');
    }
    let log_path = args.out.join("convergence.jsonl");
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = rff_slam::estimator::Checkpoint {
        model: output.model.clone(),
        state: output.state.clone(),
    };
    std::fs::write(args.out.join("checkpoint.json"), checkpoint.to_json()?)
        .map_err(|e| Error::io(args.out.join("checkpoint.json"), e))?;

    if let Some(gt) = &dataset.ground_truth {
        let report = pipeline::evaluate_output(&output, gt)?;
        io::save_report(&report, &args.out)?;
        println!(
            "run: objective {:.6e}, APE trans {:.4} m, APE rot {:.4} rad",
            output.final_objective, report.ape_trans, report.ape_rot
        );
    } else {
        println!(
            "run: objective {:.6e} (no ground truth)",
            output.final_objective
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let estimate = io::load_trajectory_csv(&args.estimate)?;
    let truth = io::load_trajectory_csv(&args.truth)?;
    let truth_aligned = truth.resample_at(estimate.times())?;
    let report = rff_slam::eval::evaluate(&estimate, &truth_aligned)?;
    io::save_report(&report, &args.out)?;
    println!(
        "eval: APE trans {:.4} m, APE rot {:.4} rad, RPE trans {:.4} m, RPE rot {:.4} rad",
        report.ape_trans, report.ape_rot, report.rpe_trans, report.rpe_rot
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    kind: String,
    range_noise: f64,
    bearing_noise_deg: f64,
    num_landmarks: usize,
    seed: u64,
    ape_trans: f64,
    ape_rot: f64,
    rpe_trans: f64,
    rpe_rot: f64,
    rel_position: f64,
    rel_rotation: f64,
    rel_landmarks: f64,
    final_objective: f64,
}

fn sweep_one(
    kind: MeasurementKind,
    range_noise: f64,
    bearing_deg: f64,
    num_landmarks: usize,
    seed: u64,
    args: &SweepArgs,
    settings: &RunSettings,
) -> Result<SweepRow, Error> {
    let config = ScenarioConfig {
        seed,
        num_landmarks,
        duration: args.duration,
        cadence: args.cadence,
        range_noise_std: range_noise,
        bearing_noise_std: bearing_deg.to_radians(),
        measurement_kind: kind,
        ..ScenarioConfig::default()
    };
    let scenario = sim::generate_scenario(&config)?;
    let dataset = scenario_to_dataset(&scenario, &config);
    let options = RunOptions {
        solver: settings.solver.clone(),
        prior: settings.prior,
        batch_size: settings.batch_size,
        kind_filter: None,
        min_noise_std: settings.min_noise_std,
        ..RunOptions::default()
    };
    let output = pipeline::run_dataset(&dataset, &options)?;
    let report = pipeline::evaluate_output(&output, &scenario.ground_truth)?;
    let gt_at = scenario
        .ground_truth
        .resample_at(output.trajectory.times())?;
    let rel = rff_slam::eval::relative_errors(
        &output.trajectory,
        &gt_at,
        &output.landmarks,
        &scenario.landmarks,
    )?;

    let run_dir = args.out.join(format!(
        "runs/{}_r{}_b{}_m{}_s{}",
        kind.as_str(),
        range_noise,
        bearing_deg,
        num_landmarks,
        seed
    ));
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    io::save_results(&output.trajectory, &output.landmarks, &report, &run_dir)?;

    Ok(SweepRow {
        kind: kind.as_str().to_string(),
        range_noise,
        bearing_noise_deg: bearing_deg,
        num_landmarks,
        seed,
        ape_trans: report.ape_trans,
        ape_rot: report.ape_rot,
        rpe_trans: report.rpe_trans,
        rpe_rot: report.rpe_rot,
        rel_position: rel.position,
        rel_rotation: rel.rotation,
        rel_landmarks: rel.landmarks,
        final_objective: output.final_objective,
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let mut settings = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<RunSettings>(&text)
                .map_err(|e| Error::invalid(format!("bad config file: {e}")))?
        }
        None => RunSettings::default(),
    };
    settings.prior = PriorChoice::parse(&args.prior)?;
    if args.batch_size.is_some() {
        settings.batch_size = args.batch_size;
    }
    if let Some(v) = args.features {
        settings.solver.num_features = v;
    }
    if let Some(v) = args.lengthscale {
        settings.solver.lengthscale = v;
    }
    if let Some(v) = args.weight_prior_scale {
        settings.solver.weight_prior_scale = v;
    }

    let kinds = args
        .kinds
        .iter()
        .map(|k| MeasurementKind::parse(k))
        .collect::<Result<Vec<_>, _>>()?;

    let mut jobs = Vec::new();
    for &kind in &kinds {
        for &r in &args.range_noises {
            for &b in &args.bearing_noises_deg {
                // Only the relevant noise axis varies for single-kind runs.
                if kind == MeasurementKind::Range && b != args.bearing_noises_deg[0] {
                    continue;
                }
                if kind == MeasurementKind::Bearing && r != args.range_noises[0] {
                    continue;
                }
                for &m in &args.landmark_counts {
                    for s in 0..args.seeds {
                        jobs.push((kind, r, b, m, args.base_seed + s));
                    }
                }
            }
        }
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&settings, &args.out.join("config.json"))?;

    let rows: Vec<Result<SweepRow, Error>> = if args.parallel_scenarios > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.parallel_scenarios)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter()
                .map(|&(k, r, b, m, s)| sweep_one(k, r, b, m, s, args, &settings))
                .collect()
        })
    } else {
        jobs.iter()
            .map(|&(k, r, b, m, s)| sweep_one(k, r, b, m, s, args, &settings))
            .collect()
    };

    let mut summary = Vec::new();
    for row in rows {
        summary.push(row?);
    }
    write_json(&summary, &args.out.join("summary.json"))?;

    let mut csv = String::from(
        "kind,range_noise,bearing_noise_deg,num_landmarks,seed,ape_trans,ape_rot,rpe_trans,rpe_rot,rel_position,rel_rotation,rel_landmarks,final_objective\n",
    );
    for r in &summary {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.kind,
            r.range_noise,
            r.bearing_noise_deg,
            r.num_landmarks,
            r.seed,
            r.ape_trans,
            r.ape_rot,
            r.rpe_trans,
            r.rpe_rot,
            r.rel_position,
            r.rel_rotation,
            r.rel_landmarks,
            r.final_objective
        ));
    }
    let csv_path = args.out.join("summary.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    println!("sweep: {} runs -> {}", summary.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
