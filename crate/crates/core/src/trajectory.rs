//! Timestamped pose sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{wrap, Pose2D};

/// A sequence of poses sampled at non-decreasing times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    times: Vec<f64>,
    poses: Vec<Pose2D>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, poses: Vec<Pose2D>) -> Result<Self> {
        if times.len() != poses.len() {
            return Err(Error::invalid(format!(
                "{} times vs {} poses",
                times.len(),
                poses.len()
            )));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("trajectory times must be non-decreasing"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("trajectory times must be finite"));
        }
        Ok(Self { times, poses })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, pose: Pose2D) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if time < last {
                return Err(Error::invalid(format!(
                    "time {time} precedes previous sample at {last}"
                )));
            }
        }
        self.times.push(time);
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Pose2D)> {
        self.times.iter().copied().zip(self.poses.iter())
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Linear interpolation at `t`; headings blend along the shorter arc.
    /// Clamps outside the sampled span.
    pub fn interpolate(&self, t: f64) -> Result<Pose2D> {
        if self.is_empty() {
            return Err(Error::invalid("cannot interpolate an empty trajectory"));
        }
        if t <= self.times[0] {
            return Ok(self.poses[0]);
        }
        let n = self.len();
        if t >= self.times[n - 1] {
            return Ok(self.poses[n - 1]);
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.poses[i]),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (p0, p1) = (&self.poses[idx - 1], &self.poses[idx]);
        if t1 == t0 {
            return Ok(*p0);
        }
        let s = (t - t0) / (t1 - t0);
        let dh = wrap(p1.heading - p0.heading);
        Ok(Pose2D::new(
            p0.x + s * (p1.x - p0.x),
            p0.y + s * (p1.y - p0.y),
            p0.heading + s * dh,
        ))
    }

    /// Resample at the given times by linear interpolation.
    pub fn resample_at(&self, times: &[f64]) -> Result<Trajectory> {
        let poses = times
            .iter()
            .map(|&t| self.interpolate(t))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(times.to_vec(), poses)
    }

    /// Axis-aligned bounding box of the positions: `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> Option<(f64, f64, f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut bb = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.poses {
            bb.0 = bb.0.min(p.x);
            bb.1 = bb.1.min(p.y);
            bb.2 = bb.2.max(p.x);
            bb.3 = bb.3.max(p.y);
        }
        Some(bb)
    }

    /// Diagonal of the bounding box; a scale for normalizing errors.
    pub fn extent(&self) -> f64 {
        match self.bounding_box() {
            Some((x0, y0, x1, y1)) => (x1 - x0).hypot(y1 - y0),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_decreasing_times() {
        let poses = vec![Pose2D::origin(); 2];
        assert!(Trajectory::new(vec![1.0, 0.5], poses).is_err());
    }

    #[test]
    fn interpolates_positions_and_headings() {
        let traj = Trajectory::new(
            vec![0.0, 1.0],
            vec![Pose2D::new(0.0, 0.0, 3.0), Pose2D::new(2.0, 4.0, -3.0)],
        )
        .unwrap();
        let mid = traj.interpolate(0.5).unwrap();
        assert_relative_eq!(mid.x, 1.0);
        assert_relative_eq!(mid.y, 2.0);
        // Shorter arc from 3.0 to -3.0 passes through pi, not zero.
        assert!(mid.heading.abs() > 3.0);
    }

    #[test]
    fn clamps_outside_span() {
        let traj = Trajectory::new(
            vec![0.0, 1.0],
            vec![Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(1.0, 0.0, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(traj.interpolate(-5.0).unwrap().x, 0.0);
        assert_relative_eq!(traj.interpolate(5.0).unwrap().x, 1.0);
    }
}
