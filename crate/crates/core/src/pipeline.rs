//! Dataset-to-estimate drivers: prior selection, batching, estimation and
//! evaluation, shared by the CLI and the test suites.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    heading_from_motion, map_objective, BatchReport, IncrementalEstimator, PriorRefresh,
    SolverConfig, TrajectoryModel, WeightState,
};
use crate::eval::EvalReport;
use crate::io::Dataset;
use crate::observation::{Landmark2D, Measurement, MeasurementKind, Pose2D};
use crate::priors::{MotionModelPrior, PriorMean, SplinePriorConfig, TrajectoryPrior, ZeroPrior};
use crate::trajectory::Trajectory;

/// Prior mean model of a run. `Motion` and `Spline` are the estimation
/// modes; `Zero` and `Truth` exist for experiments and sanity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    Motion,
    Spline,
    Zero,
    Truth,
}

impl PriorChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "motion" => Ok(Self::Motion),
            "spline" => Ok(Self::Spline),
            "zero" => Ok(Self::Zero),
            "truth" => Ok(Self::Truth),
            other => Err(Error::invalid(format!(
                "unknown prior `{other}` (expected motion, spline, zero or truth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub solver: SolverConfig,
    pub prior: PriorChoice,
    /// Measurements per incremental batch; `None` solves once over all.
    pub batch_size: Option<usize>,
    /// Keep only this measurement kind, projecting range+bearing rows down
    /// to the requested component.
    pub kind_filter: Option<MeasurementKind>,
    /// Noise stds below this are raised to it before estimation.
    pub min_noise_std: f64,
    pub spline_prior: SplinePriorConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            prior: PriorChoice::Spline,
            batch_size: None,
            kind_filter: None,
            min_noise_std: 1e-3,
            spline_prior: SplinePriorConfig::default(),
        }
    }
}

/// Everything an estimation run produces.
pub struct RunOutput {
    /// Estimate at the measurement times (headings from motion direction
    /// when the measurements carry no bearing).
    pub trajectory: Trajectory,
    pub landmarks: Vec<Landmark2D>,
    pub state: WeightState,
    pub model: TrajectoryModel,
    pub batch_reports: Vec<BatchReport>,
    pub final_objective: f64,
}

/// Project a measurement onto the requested kind, if possible.
fn restrict_kind(m: &Measurement, kind: MeasurementKind) -> Option<Measurement> {
    if m.kind == kind {
        return Some(m.clone());
    }
    if m.kind != MeasurementKind::RangeBearing {
        return None;
    }
    let row = match kind {
        MeasurementKind::Range => 0,
        MeasurementKind::Bearing => 1,
        MeasurementKind::RangeBearing => unreachable!("equal kinds handled above"),
    };
    Measurement::with_stds(
        m.time,
        m.landmark_id,
        kind,
        vec![m.value[row]],
        vec![m.noise_cov[(row, row)].sqrt()],
    )
    .ok()
}

fn floor_noise(m: &Measurement, min_std: f64) -> Result<Measurement> {
    let mut cov = m.noise_cov.clone();
    let floor = min_std * min_std;
    for i in 0..cov.nrows() {
        if cov[(i, i)] < floor {
            cov[(i, i)] = floor;
        }
    }
    Measurement::new(m.time, m.landmark_id, m.kind, m.value.clone(), cov)
}

/// Prepare the measurement stream of a run: kind filter, then noise floor.
pub fn prepare_measurements(dataset: &Dataset, options: &RunOptions) -> Result<Vec<Measurement>> {
    let mut out = Vec::with_capacity(dataset.measurements.len());
    for m in &dataset.measurements {
        let kept = match options.kind_filter {
            Some(kind) => restrict_kind(m, kind),
            None => Some(m.clone()),
        };
        if let Some(kept) = kept {
            out.push(floor_noise(&kept, options.min_noise_std)?);
        }
    }
    Ok(out)
}

fn build_prior(
    dataset: &Dataset,
    options: &RunOptions,
) -> Result<(std::sync::Arc<dyn PriorMean + Send + Sync>, PriorRefresh)> {
    let motion_prior = || -> Result<MotionModelPrior> {
        if dataset.odometry.is_empty() {
            return Err(Error::Validation(
                "the motion prior requires odometry records".into(),
            ));
        }
        // Anchor at the first ground-truth pose when one exists, so the
        // estimate lives in the benchmark frame.
        let (start_time, start_pose) = match &dataset.ground_truth {
            Some(gt) if !gt.is_empty() => (gt.times()[0], gt.poses()[0]),
            _ => (
                dataset.odometry.first().map(|c| c.time).unwrap_or(0.0),
                Pose2D::origin(),
            ),
        };
        MotionModelPrior::integrate(start_pose, start_time, &dataset.odometry)
    };

    match options.prior {
        PriorChoice::Motion => Ok((std::sync::Arc::new(motion_prior()?), PriorRefresh::Fixed)),
        PriorChoice::Spline => {
            let refresh = PriorRefresh::Spline(options.spline_prior);
            if dataset.odometry.is_empty() {
                Ok((std::sync::Arc::new(ZeroPrior), refresh))
            } else {
                Ok((std::sync::Arc::new(motion_prior()?), refresh))
            }
        }
        PriorChoice::Zero => Ok((std::sync::Arc::new(ZeroPrior), PriorRefresh::Fixed)),
        PriorChoice::Truth => {
            let gt = dataset.ground_truth.clone().ok_or_else(|| {
                Error::Validation("the truth prior requires ground truth in the dataset".into())
            })?;
            Ok((
                std::sync::Arc::new(TrajectoryPrior::new(gt)?),
                PriorRefresh::Fixed,
            ))
        }
    }
}

/// Run the estimator over a dataset.
pub fn run_dataset(dataset: &Dataset, options: &RunOptions) -> Result<RunOutput> {
    options.solver.validate()?;
    let measurements = prepare_measurements(dataset, options)?;
    if measurements.is_empty() {
        return Err(Error::Validation(
            "no measurements left after filtering".into(),
        ));
    }
    let (prior, refresh) = build_prior(dataset, options)?;
    let model = options.solver.build_model()?;
    let batch_size = options.batch_size.unwrap_or(measurements.len());
    let mut estimator = IncrementalEstimator::new(
        options.solver.clone(),
        model.clone(),
        prior,
        refresh,
        batch_size,
    )?;
    for lp in &dataset.landmark_priors {
        estimator.add_landmark_prior(
            lp.id,
            Vector2::new(lp.x, lp.y),
            Matrix2::new(lp.sigma_x * lp.sigma_x, 0.0, 0.0, lp.sigma_y * lp.sigma_y),
        )?;
    }
    estimator.push(&measurements)?;
    estimator.flush()?;

    let times: Vec<f64> = measurements.iter().map(|m| m.time).collect();
    let mut trajectory = estimator.trajectory_at(&times)?;
    // Without bearing information the heading block is prior-only; report
    // the movement direction instead.
    let bearing_free = measurements.iter().all(|m| !m.kind.has_bearing());
    if bearing_free && trajectory.len() >= 2 {
        trajectory = heading_from_motion(&trajectory)?;
    }

    let final_objective = map_objective(
        estimator.state(),
        &measurements,
        estimator.model(),
        estimator.prior(),
    )?;
    Ok(RunOutput {
        trajectory,
        landmarks: estimator.state().landmarks(),
        state: estimator.state().clone(),
        model,
        batch_reports: estimator.reports().to_vec(),
        final_objective,
    })
}

/// Compare a run against ground truth, resampling the ground truth at the
/// estimate's timestamps.
pub fn evaluate_output(output: &RunOutput, ground_truth: &Trajectory) -> Result<EvalReport> {
    let gt = ground_truth.resample_at(output.trajectory.times())?;
    crate::eval::evaluate(&output.trajectory, &gt)
}
