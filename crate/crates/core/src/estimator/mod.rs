//! Joint weight-space trajectory and landmark MAP estimator.
//!
//! One estimation round linearizes the measurement model at the current
//! state, assembles the matrix-free normal equations, solves the
//! Levenberg-Marquardt damped system by preconditioned conjugate gradients,
//! and accepts or rejects the step on the true MAP objective:
//!
//! - accepted: `lambda *= lm_down`, continue from the new state;
//! - rejected: `lambda *= lm_up`, re-solve the same linearization.
//!
//! Iteration stops when the relative objective change drops below the
//! tolerance or the iteration budget is exhausted. [`IncrementalEstimator`]
//! wraps this loop for streaming use: every `batch_size` new measurements it
//! re-solves over everything seen so far, optionally refreshing the
//! smoothing-spline prior mean from the current estimate first.

mod cg;
mod init;
mod state;
mod system;

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{wrap, Measurement, Pose2D};
use crate::priors::{ContinuedPrior, PriorMean, SplinePrior, SplinePriorConfig};
use crate::trajectory::Trajectory;

pub use cg::lm_solve;
pub use init::initial_landmark_estimate;
pub use state::{interpolate_state, StateLayout, TrajectoryModel, WeightState, STATE_DIMS};
pub use system::{
    assemble_system, estimate_trajectory, map_objective, residual_norms, LinearizedSystem,
};

use system::Problem;

/// Damping beyond this is treated as a stalled line search.
const LAMBDA_MAX: f64 = 1e10;

/// Solver configuration; defaults follow the reference experiment setup
/// (`D = 100`, `sigma_l = 3.0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of random features per state dimension (even).
    pub num_features: usize,
    /// RBF kernel lengthscale, in units of scaled time.
    pub lengthscale: f64,
    /// Seed of the frequency sampler.
    pub basis_seed: u64,
    /// Factor applied to time before it enters the kernel.
    pub time_scale: f64,
    /// Weight prior covariance is `weight_prior_scale * I` per dimension.
    pub weight_prior_scale: f64,
    /// Landmark prior covariance is `landmark_prior_cov * I` unless a
    /// dataset supplies one.
    pub landmark_prior_cov: f64,
    /// Assumed range of a landmark first seen through a lone bearing.
    pub landmark_init_range: f64,
    /// Initial Levenberg-Marquardt damping.
    pub lm_lambda_init: f64,
    /// Damping growth on rejected steps (`> 1`).
    pub lm_up: f64,
    /// Damping decay on accepted steps (in `(0, 1)`).
    pub lm_down: f64,
    /// Relative objective-change tolerance.
    pub tolerance: f64,
    /// Maximum accepted iterations.
    pub max_iterations: usize,
    /// Objective value below which iteration stops outright.
    pub objective_floor: f64,
    /// Relative residual target of the inner CG solve.
    pub cg_tolerance: f64,
    /// CG iteration cap; defaults to four times the system dimension.
    pub cg_max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_features: 100,
            lengthscale: 3.0,
            basis_seed: 0,
            time_scale: 1.0,
            weight_prior_scale: 1.0,
            landmark_prior_cov: 1e4,
            landmark_init_range: 10.0,
            lm_lambda_init: 1e-3,
            lm_up: 10.0,
            lm_down: 0.1,
            tolerance: 1e-6,
            max_iterations: 50,
            objective_floor: 1e-12,
            cg_tolerance: 1e-8,
            cg_max_iter: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_features < 2 || !self.num_features.is_multiple_of(2) {
            return Err(Error::invalid("num_features must be even and >= 2"));
        }
        for (name, v) in [
            ("lengthscale", self.lengthscale),
            ("time_scale", self.time_scale),
            ("weight_prior_scale", self.weight_prior_scale),
            ("landmark_prior_cov", self.landmark_prior_cov),
            ("landmark_init_range", self.landmark_init_range),
            ("lm_lambda_init", self.lm_lambda_init),
            ("tolerance", self.tolerance),
            ("cg_tolerance", self.cg_tolerance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lm_up > 1.0) {
            return Err(Error::invalid("lm_up must exceed 1"));
        }
        if !(self.lm_down > 0.0 && self.lm_down < 1.0) {
            return Err(Error::invalid("lm_down must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    /// Build the trajectory model this configuration describes: one shared
    /// basis for x, y and heading.
    pub fn build_model(&self) -> Result<TrajectoryModel> {
        self.validate()?;
        let basis = crate::features::FeatureBasis::sample(
            self.num_features,
            self.lengthscale,
            1,
            self.basis_seed,
        )?;
        TrajectoryModel::shared(basis, self.time_scale)
    }
}

/// Outcome of one [`update_state`] run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Accepted LM iterations.
    pub iterations: usize,
    pub rejected_steps: usize,
    /// Relative objective change fell below tolerance (or the floor).
    pub converged: bool,
    /// Damping hit its cap without an acceptable step.
    pub stalled: bool,
    pub final_lambda: f64,
    /// Objective after the initial evaluation and each accepted step.
    pub objective_trace: Vec<f64>,
}

/// Run the damped Gauss-Newton loop over `measurements` until convergence.
pub fn update_state(
    state: WeightState,
    measurements: &[Measurement],
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
    config: &SolverConfig,
) -> Result<(WeightState, ConvergenceReport)> {
    config.validate()?;
    let problem = Problem::new(&state, measurements, model, prior_mean)?;
    let mut state = state;
    let mut objective = problem.objective(&state)?;
    let mut trace = vec![objective];
    let mut lambda = config.lm_lambda_init;
    let mut rejected = 0usize;
    let mut iterations = 0usize;
    let mut converged = objective <= config.objective_floor;
    let mut stalled = false;

    while !converged && iterations < config.max_iterations {
        let system = problem.assemble(&state)?;
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let delta = lm_solve(&system, lambda, config.cg_tolerance, config.cg_max_iter)?;
            let candidate = state.vector() + &delta;
            let candidate_objective = problem.objective_of_vector(&state, &candidate);
            if candidate_objective <= objective {
                state = state.with_vector(candidate)?;
                let previous = objective;
                objective = candidate_objective;
                trace.push(objective);
                lambda *= config.lm_down;
                iterations += 1;
                accepted = true;
                let rel = (previous - objective).abs() / previous.abs().max(f64::MIN_POSITIVE);
                if rel < config.tolerance || objective <= config.objective_floor {
                    converged = true;
                }
                break;
            }
            lambda *= config.lm_up;
            rejected += 1;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }

    let report = ConvergenceReport {
        initial_objective: trace[0],
        final_objective: objective,
        iterations,
        rejected_steps: rejected,
        converged,
        stalled,
        final_lambda: lambda,
        objective_trace: trace,
    };
    Ok((state, report))
}

/// Add landmarks for every measurement id the state does not know yet,
/// triangulated from their first observations against the current estimate.
pub fn initialize_landmarks(
    state: &mut WeightState,
    measurements: &[Measurement],
    model: &TrajectoryModel,
    prior_mean: &dyn PriorMean,
    config: &SolverConfig,
) -> Result<()> {
    let mut new_ids = Vec::new();
    let mut seen = HashSet::new();
    for m in measurements {
        if state.landmark_index(m.landmark_id).is_none() && seen.insert(m.landmark_id) {
            new_ids.push(m.landmark_id);
        }
    }
    for id in new_ids {
        let observations: Vec<(&Measurement, Pose2D)> = measurements
            .iter()
            .filter(|m| m.landmark_id == id)
            .take(8)
            .map(|m| interpolate_state(state, model, prior_mean, m.time).map(|pose| (m, pose)))
            .collect::<Result<_>>()?;
        let estimate = initial_landmark_estimate(&observations, config.landmark_init_range)
            .expect("id collected from a non-empty observation set");
        state.add_landmark(
            id,
            estimate,
            Matrix2::identity() * config.landmark_prior_cov,
        )?;
    }
    Ok(())
}

/// How the prior mean evolves across incremental batches.
#[derive(Debug, Clone)]
pub enum PriorRefresh {
    /// Keep the initial prior mean throughout.
    Fixed,
    /// Refit a weighted smoothing spline to the current estimate before each
    /// batch after the first.
    Spline(SplinePriorConfig),
}

/// Adapter exposing a shared prior through the boxed slot.
struct SharedPrior(Arc<dyn PriorMean + Send + Sync>);

impl PriorMean for SharedPrior {
    fn pose_at(&self, t: f64) -> Pose2D {
        self.0.pose_at(t)
    }
}

/// Per-batch record written to the convergence log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch: usize,
    pub measurements: usize,
    pub report: ConvergenceReport,
}

/// Streaming wrapper: accumulates measurements and re-solves the full
/// problem every `batch_size` arrivals.
pub struct IncrementalEstimator {
    config: SolverConfig,
    model: TrajectoryModel,
    state: WeightState,
    base_prior: Arc<dyn PriorMean + Send + Sync>,
    prior: Box<dyn PriorMean + Send>,
    refresh: PriorRefresh,
    measurements: Vec<Measurement>,
    active: usize,
    batch_size: usize,
    batches_done: usize,
    reports: Vec<BatchReport>,
}

impl IncrementalEstimator {
    pub fn new(
        config: SolverConfig,
        model: TrajectoryModel,
        prior: Arc<dyn PriorMean + Send + Sync>,
        refresh: PriorRefresh,
        batch_size: usize,
    ) -> Result<Self> {
        config.validate()?;
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        let state = WeightState::new(&model, config.weight_prior_scale)?;
        Ok(Self {
            config,
            model,
            state,
            prior: Box::new(SharedPrior(prior.clone())),
            base_prior: prior,
            refresh,
            measurements: Vec::new(),
            active: 0,
            batch_size,
            batches_done: 0,
            reports: Vec::new(),
        })
    }

    /// Pre-register a landmark prior (e.g. from a dataset file).
    pub fn add_landmark_prior(
        &mut self,
        id: u64,
        mean: Vector2<f64>,
        cov: Matrix2<f64>,
    ) -> Result<()> {
        self.state.add_landmark(id, mean, cov)
    }

    pub fn state(&self) -> &WeightState {
        &self.state
    }

    pub fn model(&self) -> &TrajectoryModel {
        &self.model
    }

    pub fn prior(&self) -> &dyn PriorMean {
        self.prior.as_ref()
    }

    pub fn reports(&self) -> &[BatchReport] {
        &self.reports
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// Append measurements; runs one solve per completed batch.
    pub fn push(&mut self, new_measurements: &[Measurement]) -> Result<()> {
        self.measurements.extend_from_slice(new_measurements);
        while self.measurements.len() - self.active >= self.batch_size {
            let next_active = self.active + self.batch_size;
            self.solve_through(next_active)?;
        }
        Ok(())
    }

    /// Solve any remaining partial batch.
    pub fn flush(&mut self) -> Result<()> {
        if self.active < self.measurements.len() {
            self.solve_through(self.measurements.len())?;
        }
        Ok(())
    }

    fn solve_through(&mut self, next_active: usize) -> Result<()> {
        // Refresh the prior from the estimate of the previous batch before
        // the new measurements join the problem.
        if self.batches_done > 0 {
            if let PriorRefresh::Spline(spline_config) = &self.refresh {
                let previous = &self.measurements[..self.active];
                let times: Vec<f64> = previous.iter().map(|m| m.time).collect();
                let estimate =
                    estimate_trajectory(&self.state, &self.model, self.prior.as_ref(), &times)?;
                let residuals =
                    residual_norms(&self.state, previous, &self.model, self.prior.as_ref())?;
                // residual_norms is per measurement; map onto the deduped
                // trajectory times by averaging. SplinePrior::fit merges
                // duplicates itself, so hand it the raw series.
                let mut traj = Trajectory::empty();
                let mut res = Vec::new();
                let mut order: Vec<usize> = (0..previous.len()).collect();
                order.sort_by(|&a, &b| previous[a].time.partial_cmp(&previous[b].time).unwrap());
                for idx in order {
                    let pose = estimate.interpolate(previous[idx].time)?;
                    traj.push(previous[idx].time, pose)?;
                    res.push(residuals[idx]);
                }
                match SplinePrior::fit(&traj, &res, spline_config) {
                    Ok(spline) => {
                        // Beyond the data seen so far the refit is pure
                        // extrapolation; continue with the base prior's
                        // relative motion instead.
                        let span_end = traj.last_time().expect("non-empty refit");
                        self.prior = Box::new(ContinuedPrior::new(
                            spline,
                            span_end,
                            self.base_prior.clone(),
                        ));
                        // The new prior mean carries the current estimate;
                        // the correction restarts from zero.
                        self.state.reset_weights();
                    }
                    // Too few distinct times yet: keep the current prior.
                    Err(Error::InvalidArgument(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }

        self.active = next_active;
        let active = &self.measurements[..self.active];
        initialize_landmarks(
            &mut self.state,
            active,
            &self.model,
            self.prior.as_ref(),
            &self.config,
        )?;
        let (state, report) = update_state(
            self.state.clone(),
            active,
            &self.model,
            self.prior.as_ref(),
            &self.config,
        )?;
        self.state = state;
        self.batches_done += 1;
        self.reports.push(BatchReport {
            batch: self.batches_done,
            measurements: self.active,
            report,
        });
        Ok(())
    }

    /// Current trajectory estimate at the given times.
    pub fn trajectory_at(&self, times: &[f64]) -> Result<Trajectory> {
        estimate_trajectory(&self.state, &self.model, self.prior.as_ref(), times)
    }
}

/// Replace headings by the direction of motion: `atan2(dy, dx)` of each
/// forward step, the last point copying its predecessor. Used when the
/// measurements carry no bearing information.
pub fn heading_from_motion(trajectory: &Trajectory) -> Result<Trajectory> {
    let n = trajectory.len();
    if n < 2 {
        return Err(Error::invalid(
            "heading_from_motion needs at least two poses",
        ));
    }
    let poses = trajectory.poses();
    let mut headings = vec![0.0f64; n];
    let mut last = None;
    for i in 0..n - 1 {
        let dx = poses[i + 1].x - poses[i].x;
        let dy = poses[i + 1].y - poses[i].y;
        if dx.hypot(dy) > 1e-12 {
            last = Some(dy.atan2(dx));
        }
        headings[i] = last.unwrap_or(poses[i].heading);
    }
    headings[n - 1] = headings[n - 2];
    let new_poses: Vec<Pose2D> = poses
        .iter()
        .zip(&headings)
        .map(|(p, &h)| Pose2D::new(p.x, p.y, wrap(h)))
        .collect();
    Trajectory::new(trajectory.times().to_vec(), new_poses)
}

/// Serializable snapshot of an estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: TrajectoryModel,
    pub state: WeightState,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::numerical("checkpoint serialization", e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::invalid(format!("invalid checkpoint: {e}")))
    }
}

#[cfg(test)]
mod tests;
