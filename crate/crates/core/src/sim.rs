//! Synthetic 2D scenario generation: smooth random trajectories, landmark
//! fields, noisy range/bearing streams and odometry.
//!
//! The trajectory generator draws waypoints in a square workspace, joins
//! them with a natural cubic spline, and rejects draws whose heading turns
//! too sharply between samples or whose speed stalls; rejected draws retry
//! on a derived random stream so the output is still a pure function of the
//! seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{observe, wrap, Landmark2D, Measurement, MeasurementKind, Pose2D};
use crate::priors::OdometryControl;
use crate::rng::SeededRng;
use crate::spline::SmoothingSpline;
use crate::trajectory::Trajectory;

/// Workspace side length, meters.
pub const BOX_SIZE: f64 = 100.0;
/// Waypoints keep this margin from the walls to leave room for overshoot.
const WAYPOINT_MARGIN: f64 = 15.0;
/// Speed cap for generated trajectories, m/s.
const SPEED_CAP: f64 = 2.0;
/// Minimum speed before a draw counts as stalled (heading ill-defined).
const MIN_SPEED: f64 = 0.05;
/// Heading change bound between consecutive samples.
const MAX_HEADING_STEP: f64 = std::f64::consts::FRAC_PI_2;
/// Stored noise stds are floored here so measurement covariances stay
/// positive definite even for noise-free scenarios.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_landmarks: usize,
    /// Scenario length, seconds.
    pub duration: f64,
    /// Measurement (and trajectory sampling) period, seconds.
    pub cadence: f64,
    /// Range noise standard deviation, meters.
    pub range_noise_std: f64,
    /// Bearing noise standard deviation, radians.
    pub bearing_noise_std: f64,
    pub measurement_kind: MeasurementKind,
    /// Landmarks farther than this are not observed; `None` disables gating.
    pub sensor_max_range: Option<f64>,
    /// Odometry noise: linear velocity std (m/s).
    pub odometry_linear_noise_std: f64,
    /// Odometry noise: angular velocity std (rad/s).
    pub odometry_angular_noise_std: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_landmarks: 20,
            duration: 60.0,
            cadence: 0.5,
            range_noise_std: 2.0,
            bearing_noise_std: 3.0_f64.to_radians(),
            measurement_kind: MeasurementKind::RangeBearing,
            sensor_max_range: None,
            odometry_linear_noise_std: 0.02,
            odometry_angular_noise_std: 0.005,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_landmarks == 0 {
            return Err(Error::invalid("num_landmarks must be at least 1"));
        }
        if !(self.duration > 0.0) || !(self.cadence > 0.0) {
            return Err(Error::invalid("duration and cadence must be positive"));
        }
        for (name, v) in [
            ("range_noise_std", self.range_noise_std),
            ("bearing_noise_std", self.bearing_noise_std),
            ("odometry_linear_noise_std", self.odometry_linear_noise_std),
            (
                "odometry_angular_noise_std",
                self.odometry_angular_noise_std,
            ),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        if let Some(r) = self.sensor_max_range {
            if !(r > 0.0) {
                return Err(Error::invalid("sensor_max_range must be positive"));
            }
        }
        Ok(())
    }
}

/// A generated experiment: ground truth plus everything the estimator sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ground_truth: Trajectory,
    pub landmarks: Vec<Landmark2D>,
    pub measurements: Vec<Measurement>,
    pub odometry: Vec<OdometryControl>,
    /// Sample times at which no landmark was visible.
    pub empty_times: Vec<f64>,
}

/// Smooth random trajectory within the workspace, sampled every `cadence`
/// seconds. Deterministic per seed.
pub fn generate_trajectory(seed: u64, duration: f64, cadence: f64) -> Result<Trajectory> {
    if !(duration > 0.0) || !(cadence > 0.0) {
        return Err(Error::invalid("duration and cadence must be positive"));
    }
    for attempt in 0..32 {
        let mut rng = SeededRng::derive(seed, attempt);
        if let Some(traj) = try_trajectory(&mut rng, duration, cadence) {
            return Ok(traj);
        }
    }
    Err(Error::numerical(
        "trajectory generation",
        format!("no smooth trajectory found for seed {seed}"),
    ))
}

fn try_trajectory(rng: &mut SeededRng, duration: f64, cadence: f64) -> Option<Trajectory> {
    // Waypoints roughly every 12 seconds, at least 4 for the spline.
    let count = ((duration / 12.0).ceil() as usize).max(4);
    let lo = WAYPOINT_MARGIN;
    let hi = BOX_SIZE - WAYPOINT_MARGIN;
    let mut wx: Vec<f64> = (0..count).map(|_| rng.uniform_in(lo, hi)).collect();
    let mut wy: Vec<f64> = (0..count).map(|_| rng.uniform_in(lo, hi)).collect();
    let wt: Vec<f64> = (0..count)
        .map(|i| i as f64 * duration / (count - 1) as f64)
        .collect();

    // Cap chord speeds by shrinking waypoints toward their centroid; the
    // spline can still overshoot slightly, so leave headroom under the cap.
    let mut max_chord = 0.0f64;
    for i in 1..count {
        let d = (wx[i] - wx[i - 1]).hypot(wy[i] - wy[i - 1]);
        max_chord = max_chord.max(d / (wt[i] - wt[i - 1]));
    }
    let headroom = 0.75 * SPEED_CAP;
    if max_chord > headroom {
        let scale = headroom / max_chord;
        let cx = wx.iter().sum::<f64>() / count as f64;
        let cy = wy.iter().sum::<f64>() / count as f64;
        for i in 0..count {
            wx[i] = cx + (wx[i] - cx) * scale;
            wy[i] = cy + (wy[i] - cy) * scale;
        }
    }

    let sx = SmoothingSpline::interpolating(&wt, &wx).ok()?;
    let sy = SmoothingSpline::interpolating(&wt, &wy).ok()?;

    let steps = (duration / cadence).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * cadence).collect();
    let mut xs = Vec::with_capacity(times.len());
    let mut ys = Vec::with_capacity(times.len());
    let mut headings = Vec::with_capacity(times.len());
    for &t in &times {
        let (dx, dy) = (sx.deriv(t), sy.deriv(t));
        let speed = dx.hypot(dy);
        if !(MIN_SPEED..=SPEED_CAP).contains(&speed) {
            return None;
        }
        xs.push(sx.eval(t));
        ys.push(sy.eval(t));
        headings.push(dy.atan2(dx));
    }
    for w in headings.windows(2) {
        if wrap(w[1] - w[0]).abs() >= MAX_HEADING_STEP {
            return None;
        }
    }

    // Uniform shrink into the workspace if the spline overshot a wall.
    let (min_x, max_x) = bounds(&xs);
    let (min_y, max_y) = bounds(&ys);
    if min_x < 0.0 || min_y < 0.0 || max_x > BOX_SIZE || max_y > BOX_SIZE {
        let span = (max_x - min_x).max(max_y - min_y);
        if span <= 0.0 {
            return None;
        }
        let scale = ((BOX_SIZE - 2.0) / span).min(1.0);
        let (cx, cy) = (0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
        for i in 0..xs.len() {
            xs[i] = BOX_SIZE / 2.0 + (xs[i] - cx) * scale;
            ys[i] = BOX_SIZE / 2.0 + (ys[i] - cy) * scale;
        }
    }

    let poses: Vec<Pose2D> = (0..times.len())
        .map(|i| Pose2D::new(xs[i], ys[i], headings[i]))
        .collect();
    Trajectory::new(times, poses).ok()
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Noisy measurements of `landmarks` along `trajectory`.
///
/// Emits one measurement per (sample time, visible landmark) pair, plus the
/// list of times with no visible landmark. Values of noise-free scenarios
/// equal the observation function exactly; stored covariances use stds
/// floored at [`SIGMA_FLOOR`].
pub fn generate_measurements(
    trajectory: &Trajectory,
    landmarks: &[Landmark2D],
    config: &ScenarioConfig,
) -> Result<(Vec<Measurement>, Vec<f64>)> {
    config.validate()?;
    let mut rng = SeededRng::derive(config.seed, 2);
    let kind = config.measurement_kind;
    let stds: Vec<f64> = match kind {
        MeasurementKind::Range => vec![config.range_noise_std],
        MeasurementKind::Bearing => vec![config.bearing_noise_std],
        MeasurementKind::RangeBearing => {
            vec![config.range_noise_std, config.bearing_noise_std]
        }
    };
    let stored_stds: Vec<f64> = stds.iter().map(|s| s.max(SIGMA_FLOOR)).collect();

    let mut measurements = Vec::new();
    let mut empty_times = Vec::new();
    for (t, pose) in trajectory.iter() {
        let mut any = false;
        for lm in landmarks {
            if let Some(max_range) = config.sensor_max_range {
                let dist = (lm.x - pose.x).hypot(lm.y - pose.y);
                if dist > max_range {
                    continue;
                }
            }
            let mut z = observe(pose, lm, kind)?;
            for (v, s) in z.iter_mut().zip(&stds) {
                if *s > 0.0 {
                    *v += rng.normal(*s);
                }
            }
            if kind.has_bearing() {
                let last = z.len() - 1;
                z[last] = wrap(z[last]);
            }
            measurements.push(Measurement::with_stds(
                t,
                lm.id,
                kind,
                z.as_slice().to_vec(),
                stored_stds.clone(),
            )?);
            any = true;
        }
        if !any {
            empty_times.push(t);
        }
    }
    Ok((measurements, empty_times))
}

/// Odometry derived from consecutive ground-truth samples, optionally noisy.
pub fn generate_odometry(trajectory: &Trajectory, config: &ScenarioConfig) -> Vec<OdometryControl> {
    let mut rng = SeededRng::derive(config.seed, 3);
    let times = trajectory.times();
    let poses = trajectory.poses();
    let mut controls = Vec::new();
    for i in 1..trajectory.len() {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            continue;
        }
        let dist = (poses[i].x - poses[i - 1].x).hypot(poses[i].y - poses[i - 1].y);
        let dheading = wrap(poses[i].heading - poses[i - 1].heading);
        let mut v = dist / dt;
        let mut w = dheading / dt;
        if config.odometry_linear_noise_std > 0.0 {
            v += rng.normal(config.odometry_linear_noise_std);
        }
        if config.odometry_angular_noise_std > 0.0 {
            w += rng.normal(config.odometry_angular_noise_std);
        }
        controls.push(OdometryControl {
            time: times[i],
            linear_velocity: v,
            angular_velocity: w,
        });
    }
    controls
}

/// Full scenario: trajectory, uniform landmark field, measurements, odometry.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let ground_truth = generate_trajectory(config.seed, config.duration, config.cadence)?;

    let mut rng = SeededRng::derive(config.seed, 1);
    let landmarks: Vec<Landmark2D> = (0..config.num_landmarks)
        .map(|j| {
            Landmark2D::new(
                j as u64,
                rng.uniform_in(5.0, BOX_SIZE - 5.0),
                rng.uniform_in(5.0, BOX_SIZE - 5.0),
            )
        })
        .collect();

    let (measurements, empty_times) = generate_measurements(&ground_truth, &landmarks, config)?;
    let odometry = generate_odometry(&ground_truth, config);
    Ok(Scenario {
        ground_truth,
        landmarks,
        measurements,
        odometry,
        empty_times,
    })
}
