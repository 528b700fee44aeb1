//! The canonical line-oriented dataset grammar.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::observation::{Measurement, MeasurementKind, Pose2D};
use crate::priors::OdometryControl;
use crate::trajectory::Trajectory;

use super::{Dataset, LandmarkPrior};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(
    fields: &[&str],
    idx: usize,
    what: &str,
    path: &Path,
    line: usize,
) -> Result<T> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing {what} (field {})", idx + 1)))?;
    raw.parse::<T>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{raw}`")))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dataset = Dataset::default();
    let mut gt_times: Vec<f64> = Vec::new();
    let mut gt_poses: Vec<Pose2D> = Vec::new();
    let mut comment_lines = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            comment_lines += 1;
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields[0] {
            "GROUNDTRUTH" => {
                let t: f64 = field(&fields[1..], 0, "time", path, line)?;
                let x: f64 = field(&fields[1..], 1, "x", path, line)?;
                let y: f64 = field(&fields[1..], 2, "y", path, line)?;
                let heading: f64 = field(&fields[1..], 3, "heading", path, line)?;
                gt_times.push(t);
                gt_poses.push(Pose2D { x, y, heading });
            }
            "ODOMETRY" => {
                dataset.odometry.push(OdometryControl {
                    time: field(&fields[1..], 0, "time", path, line)?,
                    linear_velocity: field(&fields[1..], 1, "linear velocity", path, line)?,
                    angular_velocity: field(&fields[1..], 2, "angular velocity", path, line)?,
                });
            }
            "MEASUREMENT" => {
                let t: f64 = field(&fields[1..], 0, "time", path, line)?;
                let id: u64 = field(&fields[1..], 1, "landmark id", path, line)?;
                let kind_raw: String = field(&fields[1..], 2, "kind", path, line)?;
                let kind = MeasurementKind::parse(&kind_raw)
                    .map_err(|e| parse_err(path, line, e.to_string()))?;
                let dim = kind.dim();
                let mut values = Vec::with_capacity(dim);
                let mut sigmas = Vec::with_capacity(dim);
                for k in 0..dim {
                    values.push(field(&fields[1..], 3 + k, "value", path, line)?);
                }
                for k in 0..dim {
                    sigmas.push(field(&fields[1..], 3 + dim + k, "sigma", path, line)?);
                }
                let meas = Measurement::with_stds(t, id, kind, values, sigmas)
                    .map_err(|e| parse_err(path, line, e.to_string()))?;
                dataset.measurements.push(meas);
            }
            "LANDMARK_PRIOR" => {
                dataset.landmark_priors.push(LandmarkPrior {
                    id: field(&fields[1..], 0, "landmark id", path, line)?,
                    x: field(&fields[1..], 1, "x", path, line)?,
                    y: field(&fields[1..], 2, "y", path, line)?,
                    sigma_x: field(&fields[1..], 3, "sigma_x", path, line)?,
                    sigma_y: field(&fields[1..], 4, "sigma_y", path, line)?,
                });
            }
            "METADATA" => {
                let key: String = field(&fields[1..], 0, "key", path, line)?;
                let value = fields[2..].join(" ");
                dataset.metadata.insert(key, value);
            }
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("unknown record tag `{other}`"),
                ));
            }
        }
    }

    if !gt_times.is_empty() {
        let gt = Trajectory::new(gt_times, gt_poses)
            .map_err(|e| Error::Validation(format!("ground truth: {e}")))?;
        dataset.ground_truth = Some(gt);
    }
    dataset
        .metadata
        .insert("loader.comment_lines".into(), comment_lines.to_string());
    dataset.metadata.insert(
        "loader.measurements".into(),
        dataset.measurements.len().to_string(),
    );
    dataset
        .metadata
        .insert("loader.odometry".into(), dataset.odometry.len().to_string());
    Ok(dataset)
}

fn require_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Validation(format!("non-finite {what} ({v})")))
    }
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    if let Some(gt) = &dataset.ground_truth {
        for (t, p) in gt.iter() {
            writeln!(
                out,
                "GROUNDTRUTH {} {} {} {}",
                require_finite(t, "time")?,
                require_finite(p.x, "x")?,
                require_finite(p.y, "y")?,
                require_finite(p.heading, "heading")?
            )
            .expect("string writes cannot fail");
        }
    }
    for c in &dataset.odometry {
        writeln!(
            out,
            "ODOMETRY {} {} {}",
            require_finite(c.time, "time")?,
            require_finite(c.linear_velocity, "linear velocity")?,
            require_finite(c.angular_velocity, "angular velocity")?
        )
        .expect("string writes cannot fail");
    }
    for m in &dataset.measurements {
        let mut rec = format!(
            "MEASUREMENT {} {} {}",
            require_finite(m.time, "time")?,
            m.landmark_id,
            m.kind.as_str()
        );
        for v in m.value.iter() {
            write!(rec, " {}", require_finite(*v, "value")?).expect("string writes cannot fail");
        }
        for k in 0..m.value.len() {
            let sigma = m.noise_cov[(k, k)].sqrt();
            write!(rec, " {}", require_finite(sigma, "sigma")?).expect("string writes cannot fail");
        }
        out.push_str(&rec);
        out.push('\n');
    }
    for lp in &dataset.landmark_priors {
        writeln!(
            out,
            "LANDMARK_PRIOR {} {} {} {} {}",
            lp.id, lp.x, lp.y, lp.sigma_x, lp.sigma_y
        )
        .expect("string writes cannot fail");
    }
    for (key, value) in &dataset.metadata {
        if key.starts_with("loader.") {
            continue;
        }
        writeln!(out, "METADATA {key} {value}").expect("string writes cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
