//! Dataset formats and results persistence.
//!
//! The canonical dataset format is line-oriented plain text, one record per
//! line, space separated:
//!
//! ```text
//! # comment or blank lines are skipped
//! GROUNDTRUTH <t> <x> <y> <heading>
//! ODOMETRY <t> <linear_velocity> <angular_velocity>
//! MEASUREMENT <t> <landmark_id> range <r> <sigma_r>
//! MEASUREMENT <t> <landmark_id> bearing <b> <sigma_b>
//! MEASUREMENT <t> <landmark_id> range_bearing <r> <b> <sigma_r> <sigma_b>
//! LANDMARK_PRIOR <id> <x> <y> <sigma_x> <sigma_y>
//! METADATA <key> <value...>
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit. Ground-truth and
//! odometry records must be time-sorted in the file; measurements are sorted
//! on load. Loaders record ingestion counts under `loader.*` metadata keys,
//! which [`save_dataset`] skips.
//!
//! Two adapters convert external benchmark families to the same in-memory
//! form: `plaza` (range + odometry logs from a directory of `*_DR/_TD/_GT/_TL`
//! files) and `bearing_csv` (pre-extracted bearing observations).

mod bearing;
mod canonical;
mod plaza;
mod results;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::Measurement;
use crate::priors::OdometryControl;
use crate::trajectory::Trajectory;

pub use results::{
    load_trajectory_csv, save_landmarks_csv, save_report, save_results, save_trajectory_csv,
};

/// Gaussian prior on one landmark, axis-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPrior {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

/// Everything a run needs from disk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub ground_truth: Option<Trajectory>,
    pub odometry: Vec<OdometryControl>,
    pub measurements: Vec<Measurement>,
    pub landmark_priors: Vec<LandmarkPrior>,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    /// Distinct landmark ids in first-appearance order.
    pub fn landmark_ids(&self) -> Vec<u64> {
        let mut seen = std::collections::HashSet::new();
        let mut ids = Vec::new();
        for m in &self.measurements {
            if seen.insert(m.landmark_id) {
                ids.push(m.landmark_id);
            }
        }
        ids
    }

    /// Time span covered by measurements.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        let first = self.measurements.first()?.time;
        let last = self.measurements.last()?.time;
        Some((first, last))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Canonical,
    Plaza,
    BearingCsv,
}

impl DatasetFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "plaza" => Ok(Self::Plaza),
            "bearing_csv" => Ok(Self::BearingCsv),
            other => Err(Error::invalid(format!(
                "unknown dataset format `{other}` (expected canonical, plaza or bearing_csv)"
            ))),
        }
    }
}

/// Knobs for the format adapters; the canonical format ignores them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Range noise std supplied when the source files carry none.
    pub range_sigma: Option<f64>,
    /// Bearing noise std supplied when the source files carry none.
    pub bearing_sigma: Option<f64>,
    /// Std of landmark priors synthesized from surveyed positions.
    pub landmark_prior_sigma: f64,
    /// Weighted landmark subsampling target and seed (`bearing_csv` with a
    /// weight column only).
    pub landmark_subsample: Option<(usize, u64)>,
    /// Subsampling keeps at least this many landmarks per keyframe.
    pub min_landmarks_per_keyframe: usize,
    /// Optional ground-truth CSV (`t,x,y,heading`) merged into the dataset.
    pub ground_truth_csv: Option<std::path::PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            range_sigma: None,
            bearing_sigma: None,
            landmark_prior_sigma: 100.0,
            landmark_subsample: None,
            min_landmarks_per_keyframe: 10,
            ground_truth_csv: None,
        }
    }
}

/// Load a dataset in the named format.
pub fn load_dataset(path: &Path, format: DatasetFormat, options: &LoadOptions) -> Result<Dataset> {
    let mut dataset = match format {
        DatasetFormat::Canonical => canonical::load(path)?,
        DatasetFormat::Plaza => plaza::load(path, options)?,
        DatasetFormat::BearingCsv => bearing::load(path, options)?,
    };
    if let Some(gt_path) = &options.ground_truth_csv {
        dataset.ground_truth = Some(load_trajectory_csv(gt_path)?);
    }
    validate(&dataset)?;
    dataset.measurements.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .expect("finite measurement times")
    });
    Ok(dataset)
}

/// Write the canonical format; `loader.*` metadata keys are skipped.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    canonical::save(dataset, path)
}

fn validate(dataset: &Dataset) -> Result<()> {
    if let Some(gt) = &dataset.ground_truth {
        if gt.times().windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("ground-truth timestamps decrease".into()));
        }
    }
    if dataset.odometry.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Validation("odometry timestamps decrease".into()));
    }
    for m in &dataset.measurements {
        if !m.time.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite measurement time for landmark {}",
                m.landmark_id
            )));
        }
    }
    Ok(())
}
