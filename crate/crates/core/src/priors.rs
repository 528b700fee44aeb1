//! Prior mean models for the trajectory GP.
//!
//! A non-zero prior mean carries the non-stationary part of the trajectory so
//! the stationary-kernel GP only corrects residual errors. Two models are
//! provided: integration of odometry through a unicycle motion model, and a
//! weighted smoothing-spline refit of the current trajectory estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{wrap, Pose2D};
use crate::spline::SmoothingSpline;
use crate::trajectory::Trajectory;

/// Prior mean of the trajectory at an arbitrary query time.
pub trait PriorMean: Sync {
    fn pose_at(&self, t: f64) -> Pose2D;
}

impl<F> PriorMean for F
where
    F: Fn(f64) -> Pose2D + Sync,
{
    fn pose_at(&self, t: f64) -> Pose2D {
        self(t)
    }
}

/// Zero prior mean: the GP models the whole trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPrior;

impl PriorMean for ZeroPrior {
    fn pose_at(&self, _t: f64) -> Pose2D {
        Pose2D::origin()
    }
}

/// Prior mean backed by a fixed trajectory, linearly interpolated.
#[derive(Debug, Clone)]
pub struct TrajectoryPrior {
    trajectory: Trajectory,
}

impl TrajectoryPrior {
    pub fn new(trajectory: Trajectory) -> Result<Self> {
        if trajectory.is_empty() {
            return Err(Error::invalid("trajectory prior needs at least one pose"));
        }
        Ok(Self { trajectory })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

impl PriorMean for TrajectoryPrior {
    fn pose_at(&self, t: f64) -> Pose2D {
        self.trajectory
            .interpolate(t)
            .expect("non-empty trajectory")
    }
}

/// One odometry reading: velocities valid over the step ending at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryControl {
    pub time: f64,
    /// Forward velocity, m/s.
    pub linear_velocity: f64,
    /// Heading rate, rad/s.
    pub angular_velocity: f64,
}

/// One Euler step of the unicycle motion model:
/// `x += v dt cos(a)`, `y += v dt sin(a)`, `a += w dt` (wrapped).
pub fn motion_prior(prev: &Pose2D, control: &OdometryControl, dt: f64) -> Result<Pose2D> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let v = control.linear_velocity;
    let w = control.angular_velocity;
    Ok(Pose2D::new(
        prev.x + v * dt * prev.heading.cos(),
        prev.y + v * dt * prev.heading.sin(),
        prev.heading + w * dt,
    ))
}

/// Odometry integrated into a prior mean over the full time span.
#[derive(Debug, Clone)]
pub struct MotionModelPrior {
    prior: TrajectoryPrior,
}

impl MotionModelPrior {
    /// Integrate controls from `initial` at `start_time`. Controls must be
    /// sorted by time; readings at or before `start_time` are skipped.
    pub fn integrate(
        initial: Pose2D,
        start_time: f64,
        controls: &[OdometryControl],
    ) -> Result<Self> {
        if controls.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::invalid("odometry controls must be sorted by time"));
        }
        let mut traj = Trajectory::empty();
        traj.push(start_time, initial)?;
        let mut pose = initial;
        let mut prev_time = start_time;
        for c in controls {
            if c.time <= prev_time {
                continue;
            }
            pose = motion_prior(&pose, c, c.time - prev_time)?;
            traj.push(c.time, pose)?;
            prev_time = c.time;
        }
        Ok(Self {
            prior: TrajectoryPrior::new(traj)?,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        self.prior.trajectory()
    }
}

impl PriorMean for MotionModelPrior {
    fn pose_at(&self, t: f64) -> Pose2D {
        self.prior.pose_at(t)
    }
}

/// Configuration of the smoothing-spline prior.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplinePriorConfig {
    /// De Boor smoothing parameter in `[0, 1]`.
    pub smoothing_parameter: f64,
    /// Lower bound on residuals before inversion, so zero-residual points do
    /// not get infinite weight.
    pub weight_floor: f64,
}

impl Default for SplinePriorConfig {
    fn default() -> Self {
        Self {
            smoothing_parameter: 0.98,
            weight_floor: 1e-3,
        }
    }
}

/// Smoothing-spline refit of an estimated trajectory, weighted inversely to
/// per-point data-fit errors.
#[derive(Debug, Clone)]
pub struct SplinePrior {
    x: SmoothingSpline,
    y: SmoothingSpline,
    heading: SmoothingSpline,
}

impl SplinePrior {
    /// Fit per-coordinate splines to `trajectory`. `residuals` holds one
    /// data-fit error per trajectory point; duplicate timestamps are merged
    /// by averaging. The heading is unwrapped before fitting and re-wrapped
    /// on evaluation.
    pub fn fit(
        trajectory: &Trajectory,
        residuals: &[f64],
        config: &SplinePriorConfig,
    ) -> Result<Self> {
        if residuals.len() != trajectory.len() {
            return Err(Error::invalid(format!(
                "{} residuals for {} trajectory points",
                residuals.len(),
                trajectory.len()
            )));
        }
        if residuals.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::invalid("residuals must be non-negative"));
        }
        if !(config.weight_floor > 0.0) {
            return Err(Error::invalid("weight_floor must be positive"));
        }

        // Merge samples sharing a timestamp.
        let mut times: Vec<f64> = Vec::with_capacity(trajectory.len());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut headings = Vec::new();
        let mut res = Vec::new();
        let mut counts = Vec::new();
        for (i, (t, pose)) in trajectory.iter().enumerate() {
            if let Some(&last) = times.last() {
                if t == last {
                    let k = times.len() - 1;
                    xs[k] += pose.x;
                    ys[k] += pose.y;
                    headings[k] += pose.heading;
                    res[k] += residuals[i];
                    counts[k] += 1.0;
                    continue;
                }
            }
            times.push(t);
            xs.push(pose.x);
            ys.push(pose.y);
            headings.push(pose.heading);
            res.push(residuals[i]);
            counts.push(1.0);
        }
        for k in 0..times.len() {
            xs[k] /= counts[k];
            ys[k] /= counts[k];
            headings[k] /= counts[k];
            res[k] /= counts[k];
        }
        if times.len() < 4 {
            return Err(Error::invalid(format!(
                "spline prior needs at least 4 distinct times, got {}",
                times.len()
            )));
        }

        // Weights inverse-proportional to the data-fit error, mean one.
        let mut weights: Vec<f64> = res
            .iter()
            .map(|r| 1.0 / r.max(config.weight_floor))
            .collect();
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w /= mean);

        let unwrapped = unwrap_angles(&headings);
        let p = config.smoothing_parameter;
        Ok(Self {
            x: SmoothingSpline::fit_weighted(&times, &xs, &weights, p)?,
            y: SmoothingSpline::fit_weighted(&times, &ys, &weights, p)?,
            heading: SmoothingSpline::fit_weighted(&times, &unwrapped, &weights, p)?,
        })
    }
}

impl PriorMean for SplinePrior {
    fn pose_at(&self, t: f64) -> Pose2D {
        Pose2D::new(self.x.eval(t), self.y.eval(t), self.heading.eval(t))
    }
}

/// A refreshed prior that is only trustworthy up to `span_end`: beyond it,
/// poses continue with the base prior's relative motion from the endpoint.
pub struct ContinuedPrior {
    recent: SplinePrior,
    span_end: f64,
    base: std::sync::Arc<dyn PriorMean + Send + Sync>,
    anchor: Pose2D,
    base_at_end: Pose2D,
}

impl ContinuedPrior {
    pub fn new(
        recent: SplinePrior,
        span_end: f64,
        base: std::sync::Arc<dyn PriorMean + Send + Sync>,
    ) -> Self {
        let anchor = recent.pose_at(span_end);
        let base_at_end = base.pose_at(span_end);
        Self {
            recent,
            span_end,
            base,
            anchor,
            base_at_end,
        }
    }
}

impl PriorMean for ContinuedPrior {
    fn pose_at(&self, t: f64) -> Pose2D {
        if t <= self.span_end {
            self.recent.pose_at(t)
        } else {
            let step = self.base_at_end.inverse().compose(&self.base.pose_at(t));
            self.anchor.compose(&step)
        }
    }
}

/// Remove 2-pi jumps so consecutive samples differ by at most pi.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    for (i, &a) in angles.iter().enumerate() {
        if i == 0 {
            out.push(a);
        } else {
            let prev = out[i - 1];
            out.push(prev + wrap(a - prev));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn motion_prior_zero_control_keeps_pose() {
        let pose = Pose2D::new(1.0, 2.0, 0.5);
        let c = OdometryControl {
            time: 1.0,
            linear_velocity: 0.0,
            angular_velocity: 0.0,
        };
        let next = motion_prior(&pose, &c, 1.0).unwrap();
        assert_eq!(next, pose);
    }

    #[test]
    fn motion_prior_unit_straight_step() {
        let c = OdometryControl {
            time: 1.0,
            linear_velocity: 1.0,
            angular_velocity: 0.0,
        };
        let next = motion_prior(&Pose2D::origin(), &c, 1.0).unwrap();
        assert_relative_eq!(next.x, 1.0);
        assert_relative_eq!(next.y, 0.0);
        assert_relative_eq!(next.heading, 0.0);
    }

    #[test]
    fn motion_prior_euler_turn() {
        let c = OdometryControl {
            time: 1.0,
            linear_velocity: 1.0,
            angular_velocity: FRAC_PI_2,
        };
        let next = motion_prior(&Pose2D::origin(), &c, 1.0).unwrap();
        // Euler step: translation uses the heading before the rotation update.
        assert_relative_eq!(next.x, 1.0);
        assert_relative_eq!(next.y, 0.0);
        assert_relative_eq!(next.heading, FRAC_PI_2);
    }

    #[test]
    fn motion_prior_rejects_non_positive_dt() {
        let c = OdometryControl {
            time: 0.0,
            linear_velocity: 1.0,
            angular_velocity: 0.0,
        };
        assert!(motion_prior(&Pose2D::origin(), &c, 0.0).is_err());
        assert!(motion_prior(&Pose2D::origin(), &c, -0.1).is_err());
    }

    #[test]
    fn straight_line_displacement_is_additive() {
        let mut pose = Pose2D::new(0.0, 0.0, 0.3);
        let steps = [(1.0, 0.5), (0.5, 0.25), (2.0, 1.5), (0.7, 0.1)];
        let mut total = 0.0;
        let mut time = 0.0;
        for (v, dt) in steps {
            time += dt;
            let c = OdometryControl {
                time,
                linear_velocity: v,
                angular_velocity: 0.0,
            };
            pose = motion_prior(&pose, &c, dt).unwrap();
            total += v * dt;
        }
        let dist = pose.x.hypot(pose.y);
        assert_relative_eq!(dist, total, epsilon = 1e-12);
    }

    #[test]
    fn integrated_prior_interpolates_between_knots() {
        let controls: Vec<OdometryControl> = (1..=10)
            .map(|i| OdometryControl {
                time: i as f64,
                linear_velocity: 1.0,
                angular_velocity: 0.0,
            })
            .collect();
        let prior = MotionModelPrior::integrate(Pose2D::origin(), 0.0, &controls).unwrap();
        assert_relative_eq!(prior.pose_at(3.0).x, 3.0, epsilon = 1e-12);
        assert_relative_eq!(prior.pose_at(2.5).x, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn spline_prior_recovers_smooth_motion() {
        let mut rng = crate::rng::SeededRng::new(40);
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.5).collect();
        let mut traj = Trajectory::empty();
        for &t in &times {
            traj.push(
                t,
                Pose2D::new(
                    t.cos() * 10.0 + rng.normal(0.2),
                    t.sin() * 10.0 + rng.normal(0.2),
                    // wrapped heading sweeps through +/- pi several times
                    t * 0.1 + FRAC_PI_2,
                ),
            )
            .unwrap();
        }
        let residuals = vec![0.2; traj.len()];
        let prior = SplinePrior::fit(&traj, &residuals, &SplinePriorConfig::default()).unwrap();
        for &t in &times {
            let p = prior.pose_at(t);
            assert!((p.x - 10.0 * t.cos()).abs() < 0.5);
            assert!((p.y - 10.0 * t.sin()).abs() < 0.5);
            assert!(wrap(p.heading - (t * 0.1 + FRAC_PI_2)).abs() < 0.05);
        }
    }

    #[test]
    fn spline_prior_requires_four_distinct_times() {
        let mut traj = Trajectory::empty();
        for t in [0.0, 0.0, 1.0, 2.0] {
            traj.push(t, Pose2D::origin()).unwrap();
        }
        let res = vec![0.0; 4];
        assert!(SplinePrior::fit(&traj, &res, &SplinePriorConfig::default()).is_err());
    }

    #[test]
    fn unwrap_removes_jumps() {
        let wrapped = vec![3.0, -3.0, 3.0, -3.0];
        let un = unwrap_angles(&wrapped);
        for w in un.windows(2) {
            assert!((w[1] - w[0]).abs() <= PI);
        }
        for (w, u) in wrapped.iter().zip(&un) {
            assert!(wrap(u - w).abs() < 1e-12);
        }
    }
}
