//! Results persistence: estimated trajectory and landmark CSVs plus the
//! metrics report, laid out for external plotting.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::observation::{Landmark2D, Pose2D};
use crate::trajectory::Trajectory;

pub fn save_trajectory_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::from("t,x,y,heading\n");
    for (t, p) in trajectory.iter() {
        writeln!(out, "{t},{},{},{}", p.x, p.y, p.heading).expect("string writes cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut times = Vec::new();
    let mut poses = Vec::new();
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
        if fields.len() < 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected t,x,y,heading, found {} fields", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("invalid number `{}`", fields[i]),
            })
        };
        times.push(num(0)?);
        poses.push(Pose2D {
            x: num(1)?,
            y: num(2)?,
            heading: num(3)?,
        });
    }
    Trajectory::new(times, poses)
}

pub fn save_landmarks_csv(landmarks: &[Landmark2D], path: &Path) -> Result<()> {
    let mut out = String::from("id,x,y\n");
    for lm in landmarks {
        writeln!(out, "{},{},{}", lm.id, lm.x, lm.y).expect("string writes cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write `metrics.json` and the per-step `errors.csv` into `dir`.
pub fn save_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = serde_json::to_string_pretty(report)
        .map_err(|e| Error::numerical("metrics serialization", e.to_string()))?;
    std::fs::write(dir.join("metrics.json"), metrics)
        .map_err(|e| Error::io(dir.join("metrics.json"), e))?;

    // RPE series has one fewer entry; its first row is left empty.
    let mut errors = String::from("step,ape_trans,ape_rot,rpe_trans,rpe_rot\n");
    for (i, (at, ar)) in report
        .ape_trans_series
        .iter()
        .zip(&report.ape_rot_series)
        .enumerate()
    {
        if i == 0 {
            writeln!(errors, "{i},{at},{ar},,").expect("string writes cannot fail");
        } else {
            writeln!(
                errors,
                "{i},{at},{ar},{},{}",
                report.rpe_trans_series[i - 1],
                report.rpe_rot_series[i - 1]
            )
            .expect("string writes cannot fail");
        }
    }
    std::fs::write(dir.join("errors.csv"), errors).map_err(|e| Error::io(dir.join("errors.csv"), e))
}

/// Write `trajectory.csv`, `landmarks.csv`, `metrics.json` and the per-step
/// `errors.csv` into `dir`.
pub fn save_results(
    trajectory: &Trajectory,
    landmarks: &[Landmark2D],
    report: &EvalReport,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_trajectory_csv(trajectory, &dir.join("trajectory.csv"))?;
    save_landmarks_csv(landmarks, &dir.join("landmarks.csv"))?;
    save_report(report, dir)
}
