//! Trajectory evaluation: SE(3) lifting, absolute pose error and relative
//! pose error.
//!
//! 2D poses are lifted to rigid transforms with zero z, roll and pitch. The
//! absolute error at step `i` is `e_i = P_i^{-1} P_hat_i`; the relative error
//! compares consecutive deltas and is invariant to any rigid transform
//! applied to a whole trajectory. Translational errors are Euclidean norms
//! in meters, rotational errors the principal rotation angle in radians.
//! APE averages over `N` poses, RPE over the `N - 1` deltas.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::Pose2D;
use crate::trajectory::Trajectory;

/// Timestamp association tolerance between compared trajectories, seconds.
pub const TIME_MATCH_TOLERANCE: f64 = 1e-6;

/// Per-step `(translational, rotational)` error series.
pub type ErrorSeries = Vec<(f64, f64)>;

/// Rigid transform in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose3D {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn compose(&self, other: &Pose3D) -> Pose3D {
        Pose3D {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose3D {
        let rt = self.rotation.transpose();
        Pose3D {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Principal rotation angle in `[0, pi]`.
    ///
    /// Computed as `atan2(|skew(R)|, (trace - 1) / 2)`: unlike the plain
    /// arccosine form this stays accurate near zero, where identical poses
    /// must produce an exact zero.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let sin_part = 0.5
            * ((r[(2, 1)] - r[(1, 2)]).powi(2)
                + (r[(0, 2)] - r[(2, 0)]).powi(2)
                + (r[(1, 0)] - r[(0, 1)]).powi(2))
            .sqrt();
        let cos_part = (r.trace() - 1.0) / 2.0;
        sin_part.atan2(cos_part)
    }
}

/// Lift a planar pose: rotation about z by the heading, translation `(x, y, 0)`.
pub fn lift_to_se3(pose: &Pose2D) -> Pose3D {
    let (s, c) = pose.heading.sin_cos();
    let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    Pose3D {
        rotation,
        translation: Vector3::new(pose.x, pose.y, 0.0),
    }
}

/// Per-metric RMS plus the per-step series it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ape_trans: f64,
    pub ape_rot: f64,
    pub rpe_trans: f64,
    pub rpe_rot: f64,
    pub ape_trans_series: Vec<f64>,
    pub ape_rot_series: Vec<f64>,
    pub rpe_trans_series: Vec<f64>,
    pub rpe_rot_series: Vec<f64>,
}

fn rms(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|e| e * e).sum::<f64>() / series.len() as f64).sqrt()
}

/// Pair up the two trajectories by index, requiring matching timestamps.
fn aligned_lifts(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
) -> Result<(Vec<Pose3D>, Vec<Pose3D>)> {
    if estimate.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ after alignment: {} vs {}",
            estimate.len(),
            ground_truth.len()
        )));
    }
    for (te, tg) in estimate.times().iter().zip(ground_truth.times()) {
        if (te - tg).abs() > TIME_MATCH_TOLERANCE {
            return Err(Error::invalid(format!(
                "timestamps {te} and {tg} do not match within {TIME_MATCH_TOLERANCE}"
            )));
        }
    }
    Ok((
        estimate.poses().iter().map(lift_to_se3).collect(),
        ground_truth.poses().iter().map(lift_to_se3).collect(),
    ))
}

/// Absolute pose error: `(ape_trans, ape_rot)` RMS and the per-step series.
pub fn ape(estimate: &Trajectory, ground_truth: &Trajectory) -> Result<(f64, f64, ErrorSeries)> {
    let (est, gt) = aligned_lifts(estimate, ground_truth)?;
    let series: ErrorSeries = est
        .iter()
        .zip(&gt)
        .map(|(e, g)| {
            let err = g.inverse().compose(e);
            (err.translation.norm(), err.rotation_angle())
        })
        .collect();
    let trans: Vec<f64> = series.iter().map(|s| s.0).collect();
    let rot: Vec<f64> = series.iter().map(|s| s.1).collect();
    Ok((rms(&trans), rms(&rot), series))
}

/// Relative pose error over consecutive deltas: RMS over `N - 1` steps.
pub fn rpe(estimate: &Trajectory, ground_truth: &Trajectory) -> Result<(f64, f64, ErrorSeries)> {
    if estimate.len() < 2 {
        return Err(Error::invalid(
            "relative pose error needs at least two poses",
        ));
    }
    let (est, gt) = aligned_lifts(estimate, ground_truth)?;
    let series: ErrorSeries = (1..est.len())
        .map(|i| {
            let delta_est = est[i - 1].inverse().compose(&est[i]);
            let delta_gt = gt[i - 1].inverse().compose(&gt[i]);
            let err = delta_gt.inverse().compose(&delta_est);
            (err.translation.norm(), err.rotation_angle())
        })
        .collect();
    let trans: Vec<f64> = series.iter().map(|s| s.0).collect();
    let rot: Vec<f64> = series.iter().map(|s| s.1).collect();
    Ok((rms(&trans), rms(&rot), series))
}

/// Run both metrics and bundle the report.
pub fn evaluate(estimate: &Trajectory, ground_truth: &Trajectory) -> Result<EvalReport> {
    let (ape_trans, ape_rot, ape_series) = ape(estimate, ground_truth)?;
    let (rpe_trans, rpe_rot, rpe_series) = rpe(estimate, ground_truth)?;
    Ok(EvalReport {
        ape_trans,
        ape_rot,
        rpe_trans,
        rpe_rot,
        ape_trans_series: ape_series.iter().map(|s| s.0).collect(),
        ape_rot_series: ape_series.iter().map(|s| s.1).collect(),
        rpe_trans_series: rpe_series.iter().map(|s| s.0).collect(),
        rpe_rot_series: rpe_series.iter().map(|s| s.1).collect(),
    })
}

/// Scale-normalized summary in the style of per-scenario relative errors:
/// position RMS is divided by the diagonal of the ground-truth trajectory's
/// bounding box, landmark RMS by the diagonal of the true landmark field's
/// bounding box, and rotation is the plain RMS heading error in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub position: f64,
    pub rotation: f64,
    pub landmarks: f64,
}

pub fn relative_errors(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    estimated_landmarks: &[crate::observation::Landmark2D],
    true_landmarks: &[crate::observation::Landmark2D],
) -> Result<RelativeErrors> {
    if estimate.len() != ground_truth.len() {
        return Err(Error::invalid("trajectory lengths differ"));
    }
    let extent = ground_truth.extent().max(f64::MIN_POSITIVE);
    let pos_errors: Vec<f64> = estimate
        .poses()
        .iter()
        .zip(ground_truth.poses())
        .map(|(e, g)| (e.x - g.x).hypot(e.y - g.y))
        .collect();
    let rot_errors: Vec<f64> = estimate
        .poses()
        .iter()
        .zip(ground_truth.poses())
        .map(|(e, g)| crate::observation::wrap(e.heading - g.heading).abs())
        .collect();

    let mut lm_errors = Vec::new();
    let mut bb = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for truth in true_landmarks {
        if let Some(est) = estimated_landmarks.iter().find(|l| l.id == truth.id) {
            lm_errors.push((est.x - truth.x).hypot(est.y - truth.y));
            bb = (
                bb.0.min(truth.x),
                bb.1.min(truth.y),
                bb.2.max(truth.x),
                bb.3.max(truth.y),
            );
        }
    }
    let lm_extent = if lm_errors.is_empty() {
        f64::MIN_POSITIVE
    } else {
        (bb.2 - bb.0).hypot(bb.3 - bb.1).max(f64::MIN_POSITIVE)
    };
    Ok(RelativeErrors {
        position: rms(&pos_errors) / extent,
        rotation: rms(&rot_errors),
        landmarks: rms(&lm_errors) / lm_extent,
    })
}
