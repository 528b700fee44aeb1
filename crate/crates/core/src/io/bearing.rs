//! Adapter for pre-extracted bearing observation files.
//!
//! CSV rows `t,landmark_id,bearing[,weight]`, radians, with an optional
//! header line. Bearing noise is not recorded, so `LoadOptions::bearing_sigma`
//! must be set. When a weight column is present and
//! `LoadOptions::landmark_subsample = Some((target, seed))`, landmarks are
//! subsampled with probability proportional to their accumulated weight,
//! keeping at least `min_landmarks_per_keyframe` per distinct timestamp.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::observation::{wrap_angle, Measurement, MeasurementKind};
use crate::rng::SeededRng;

use super::{Dataset, LoadOptions};

struct Row {
    time: f64,
    landmark_id: u64,
    bearing: f64,
    weight: Option<f64>,
}

fn parse_rows(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if line == 1 && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "expected t,landmark_id,bearing[,weight], found {} fields",
                    fields.len()
                ),
            });
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("invalid {what} `{}`", fields[i]),
            })
        };
        let id = fields[1].parse::<u64>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("invalid landmark id `{}`", fields[1]),
        })?;
        let bearing = wrap_angle(num(2, "bearing")?).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let weight = if fields.len() > 3 {
            Some(num(3, "weight")?)
        } else {
            None
        };
        rows.push(Row {
            time: num(0, "time")?,
            landmark_id: id,
            bearing,
            weight,
        });
    }
    Ok(rows)
}

/// Weighted landmark selection without replacement, then per-keyframe
/// backfill so every timestamp keeps its best-observed landmarks.
fn subsample_ids(rows: &[Row], target: usize, seed: u64, min_per_keyframe: usize) -> HashSet<u64> {
    let mut weight_per_id: BTreeMap<u64, f64> = BTreeMap::new();
    for row in rows {
        *weight_per_id.entry(row.landmark_id).or_insert(0.0) += row.weight.unwrap_or(1.0).max(0.0);
    }
    let mut remaining: Vec<(u64, f64)> = weight_per_id.iter().map(|(k, v)| (*k, *v)).collect();
    let mut selected: HashSet<u64> = HashSet::new();
    let mut rng = SeededRng::new(seed);
    while selected.len() < target && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            // All residual weight is zero: take in id order.
            for (id, _) in remaining.drain(..) {
                selected.insert(id);
                if selected.len() >= target {
                    break;
                }
            }
            break;
        }
        let mut ticket = rng.uniform() * total;
        let mut pick = remaining.len() - 1;
        for (i, (_, w)) in remaining.iter().enumerate() {
            ticket -= w;
            if ticket <= 0.0 {
                pick = i;
                break;
            }
        }
        let (id, _) = remaining.swap_remove(pick);
        selected.insert(id);
    }

    // Backfill keyframes that lost too many landmarks, by descending weight.
    let mut per_time: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
    for row in rows {
        per_time
            .entry(row.time.to_bits())
            .or_default()
            .push((row.landmark_id, row.weight.unwrap_or(1.0)));
    }
    for entries in per_time.values_mut() {
        let kept = entries
            .iter()
            .filter(|(id, _)| selected.contains(id))
            .count();
        if kept >= min_per_keyframe.min(entries.len()) {
            continue;
        }
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut kept = kept;
        for (id, _) in entries.iter() {
            if kept >= min_per_keyframe.min(entries.len()) {
                break;
            }
            if selected.insert(*id) {
                kept += 1;
            }
        }
    }
    selected
}

pub fn load(path: &Path, options: &LoadOptions) -> Result<Dataset> {
    let bearing_sigma = options.bearing_sigma.ok_or_else(|| {
        Error::Validation("bearing files carry no noise level; set bearing_sigma".into())
    })?;
    let rows = parse_rows(path)?;
    let total_rows = rows.len();
    let has_weights = rows.iter().any(|r| r.weight.is_some());

    let keep: Option<HashSet<u64>> = match options.landmark_subsample {
        Some((target, seed)) if has_weights => Some(subsample_ids(
            &rows,
            target,
            seed,
            options.min_landmarks_per_keyframe,
        )),
        _ => None,
    };

    let mut dataset = Dataset::default();
    for row in rows {
        if let Some(keep) = &keep {
            if !keep.contains(&row.landmark_id) {
                continue;
            }
        }
        dataset.measurements.push(Measurement::with_stds(
            row.time,
            row.landmark_id,
            MeasurementKind::Bearing,
            vec![row.bearing],
            vec![bearing_sigma],
        )?);
    }

    dataset
        .metadata
        .insert("loader.format".into(), "bearing_csv".into());
    dataset
        .metadata
        .insert("loader.rows".into(), total_rows.to_string());
    dataset.metadata.insert(
        "loader.measurements".into(),
        dataset.measurements.len().to_string(),
    );
    if let Some(keep) = &keep {
        dataset
            .metadata
            .insert("loader.subsampled_landmarks".into(), keep.len().to_string());
    }
    Ok(dataset)
}
