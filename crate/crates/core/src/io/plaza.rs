//! Adapter for the lawn-mower style range+odometry logs.
//!
//! Expects a directory holding four delimited text files named `*_DR.*`,
//! `*_TD.*`, `*_GT.*` and `*_TL.*` (comma or whitespace separated):
//!
//! - `DR`: odometry — `time, delta_distance (m), delta_heading (rad)`
//! - `TD`: range readings — `time, antenna_id, landmark_id, range (m)`
//! - `GT`: robot ground truth — `time, x, y, heading`
//! - `TL`: surveyed landmark positions — `id, x, y`
//!
//! Deltas are converted to velocities over the inter-row interval. Range
//! noise is not recorded in the files, so `LoadOptions::range_sigma` must be
//! set. Surveyed landmark positions become weak landmark priors with std
//! `LoadOptions::landmark_prior_sigma`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::observation::{Measurement, MeasurementKind, Pose2D};
use crate::priors::OdometryControl;
use crate::trajectory::Trajectory;

use super::{Dataset, LandmarkPrior, LoadOptions};

fn find_file(dir: &Path, suffix: &str) -> Result<PathBuf> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut matches: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.ends_with(suffix))
        })
        .collect();
    matches.sort();
    matches.into_iter().next().ok_or_else(|| {
        Error::Validation(format!("no `*{suffix}.*` file found in {}", dir.display()))
    })
}

/// Rows of numbers, split on commas and whitespace; 1-based line numbers.
fn numeric_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() < columns {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {columns} fields, found {}", fields.len()),
            });
        }
        let values = fields[..columns]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("invalid number `{f}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

pub fn load(dir: &Path, options: &LoadOptions) -> Result<Dataset> {
    let range_sigma = options.range_sigma.ok_or_else(|| {
        Error::Validation("plaza datasets carry no range noise; set range_sigma".into())
    })?;

    let dr = numeric_rows(&find_file(dir, "_DR")?, 3)?;
    let td_path = find_file(dir, "_TD")?;
    let td = numeric_rows(&td_path, 4)?;
    let gt = numeric_rows(&find_file(dir, "_GT")?, 4)?;
    let tl = numeric_rows(&find_file(dir, "_TL")?, 3)?;

    let mut dataset = Dataset::default();

    // Odometry: deltas over the preceding interval become velocities.
    let mut prev_time: Option<f64> = None;
    for (_, row) in &dr {
        let (t, dd, dh) = (row[0], row[1], row[2]);
        if let Some(prev) = prev_time {
            let dt = t - prev;
            if dt > 0.0 {
                dataset.odometry.push(OdometryControl {
                    time: t,
                    linear_velocity: dd / dt,
                    angular_velocity: dh / dt,
                });
            }
        }
        prev_time = Some(t);
    }

    for (line, row) in &td {
        let (t, landmark, range) = (row[0], row[2], row[3]);
        if range <= 0.0 {
            return Err(Error::Parse {
                path: td_path.clone(),
                line: *line,
                message: format!("non-positive range {range}"),
            });
        }
        dataset.measurements.push(Measurement::with_stds(
            t,
            landmark as u64,
            MeasurementKind::Range,
            vec![range],
            vec![range_sigma],
        )?);
    }

    let mut gt_sorted = gt.clone();
    gt_sorted.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap());
    let times: Vec<f64> = gt_sorted.iter().map(|(_, r)| r[0]).collect();
    let poses: Vec<Pose2D> = gt_sorted
        .iter()
        .map(|(_, r)| Pose2D::new(r[1], r[2], r[3]))
        .collect();
    dataset.ground_truth = Some(Trajectory::new(times, poses)?);

    for (_, row) in &tl {
        dataset.landmark_priors.push(LandmarkPrior {
            id: row[0] as u64,
            x: row[1],
            y: row[2],
            sigma_x: options.landmark_prior_sigma,
            sigma_y: options.landmark_prior_sigma,
        });
    }

    dataset
        .metadata
        .insert("loader.format".into(), "plaza".into());
    dataset.metadata.insert(
        "loader.measurements".into(),
        dataset.measurements.len().to_string(),
    );
    dataset
        .metadata
        .insert("loader.odometry".into(), dataset.odometry.len().to_string());
    Ok(dataset)
}
