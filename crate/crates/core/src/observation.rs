//! Range/bearing measurement model, its analytic Jacobians and angle
//! utilities.
//!
//! A measurement relates a 2D robot pose `(x, y, alpha)` to a landmark
//! `(x_j, y_j)` through range `sqrt((x_j-x)^2 + (y_j-y)^2)` and bearing
//! `atan2(y_j-y, x_j-x) - alpha`, the bearing wrapped to `(-pi, pi]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranges below this are treated as degenerate geometry (bearing undefined).
pub const MIN_RANGE: f64 = 1e-9;

/// Robot pose in the plane: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in `(-pi, pi]` by the constructor.
    pub heading: f64,
}

impl Pose2D {
    /// Build a pose, wrapping the heading into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap(heading),
        }
    }

    pub fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Rigid composition `self * other` (apply `other` in this pose's frame).
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.heading + other.heading,
        )
    }

    /// `self^{-1}`, so that `p.inverse().compose(&p)` is the origin.
    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.heading,
        )
    }
}

/// A fixed map point observed through range and/or bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark2D {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

impl Landmark2D {
    pub fn new(id: u64, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }
}

/// Which rows of the observation function a measurement carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Range,
    Bearing,
    RangeBearing,
}

impl MeasurementKind {
    /// Number of scalar components in a measurement of this kind.
    pub fn dim(&self) -> usize {
        match self {
            MeasurementKind::Range | MeasurementKind::Bearing => 1,
            MeasurementKind::RangeBearing => 2,
        }
    }

    /// True if the measurement has a bearing component (used for residual wrapping).
    pub fn has_bearing(&self) -> bool {
        !matches!(self, MeasurementKind::Range)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementKind::Range => "range",
            MeasurementKind::Bearing => "bearing",
            MeasurementKind::RangeBearing => "range_bearing",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(MeasurementKind::Range),
            "bearing" => Ok(MeasurementKind::Bearing),
            "range_bearing" => Ok(MeasurementKind::RangeBearing),
            other => Err(Error::invalid(format!(
                "unknown measurement kind `{other}` (expected range, bearing or range_bearing)"
            ))),
        }
    }
}

/// One timestamped observation of a landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time: f64,
    pub landmark_id: u64,
    pub kind: MeasurementKind,
    /// Measured value: `[range]`, `[bearing]` or `[range, bearing]`.
    pub value: DVector<f64>,
    /// Noise covariance matching the value dimension; must be SPD.
    pub noise_cov: DMatrix<f64>,
}

impl Measurement {
    pub fn new(
        time: f64,
        landmark_id: u64,
        kind: MeasurementKind,
        value: DVector<f64>,
        noise_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = kind.dim();
        if value.len() != dim {
            return Err(Error::invalid(format!(
                "measurement value has {} components, kind {:?} expects {dim}",
                value.len(),
                kind
            )));
        }
        if noise_cov.nrows() != dim || noise_cov.ncols() != dim {
            return Err(Error::invalid(format!(
                "noise covariance is {}x{}, expected {dim}x{dim}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        if !spd(&noise_cov) {
            return Err(Error::invalid(
                "noise covariance must be symmetric positive definite",
            ));
        }
        if kind.has_bearing() {
            let bearing = value[dim - 1];
            if !(bearing > -std::f64::consts::PI && bearing <= std::f64::consts::PI) {
                return Err(Error::invalid(format!(
                    "bearing {bearing} outside (-pi, pi]"
                )));
            }
        }
        Ok(Self {
            time,
            landmark_id,
            kind,
            value,
            noise_cov,
        })
    }

    /// Convenience constructor with independent per-component noise.
    pub fn with_stds(
        time: f64,
        landmark_id: u64,
        kind: MeasurementKind,
        value: Vec<f64>,
        stds: Vec<f64>,
    ) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(
            stds.len(),
            stds.iter().map(|s| s * s),
        ));
        Self::new(time, landmark_id, kind, DVector::from_vec(value), cov)
    }
}

fn spd(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return false;
            }
        }
    }
    m.clone().cholesky().is_some()
}

/// Wrap an angle to `(-pi, pi]`. Infallible; callers must pass finite input.
pub(crate) fn wrap(theta: f64) -> f64 {
    let w = theta.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

/// Wrap an angle to `(-pi, pi]`, rejecting non-finite input.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {theta}")));
    }
    Ok(wrap(theta))
}

/// Evaluate the observation function for the requested rows.
///
/// Returns `[range]`, `[bearing]` or `[range, bearing]`; the bearing is
/// wrapped to `(-pi, pi]`.
pub fn observe(
    pose: &Pose2D,
    landmark: &Landmark2D,
    kind: MeasurementKind,
) -> Result<DVector<f64>> {
    let dx = landmark.x - pose.x;
    let dy = landmark.y - pose.y;
    let range = dx.hypot(dy);
    if range < MIN_RANGE {
        return Err(Error::DegenerateGeometry { range });
    }
    let bearing = wrap(dy.atan2(dx) - pose.heading);
    Ok(match kind {
        MeasurementKind::Range => DVector::from_vec(vec![range]),
        MeasurementKind::Bearing => DVector::from_vec(vec![bearing]),
        MeasurementKind::RangeBearing => DVector::from_vec(vec![range, bearing]),
    })
}

/// Analytic Jacobian of [`observe`] with respect to
/// `(x, y, alpha, x_j, y_j)`, one row per measured component.
pub fn observe_jacobian(
    pose: &Pose2D,
    landmark: &Landmark2D,
    kind: MeasurementKind,
) -> Result<DMatrix<f64>> {
    let dx = landmark.x - pose.x;
    let dy = landmark.y - pose.y;
    let r2 = dx * dx + dy * dy;
    let range = r2.sqrt();
    if range < MIN_RANGE {
        return Err(Error::DegenerateGeometry { range });
    }

    let range_row = [-dx / range, -dy / range, 0.0, dx / range, dy / range];
    let bearing_row = [dy / r2, -dx / r2, -1.0, -dy / r2, dx / r2];

    let rows: Vec<[f64; 5]> = match kind {
        MeasurementKind::Range => vec![range_row],
        MeasurementKind::Bearing => vec![bearing_row],
        MeasurementKind::RangeBearing => vec![range_row, bearing_row],
    };
    Ok(DMatrix::from_fn(rows.len(), 5, |i, j| rows[i][j]))
}
