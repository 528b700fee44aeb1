//! Initial landmark estimates from the first observations of each landmark.
//!
//! The landmark prior mean is triangulated from the first two measurements
//! when the geometry supports it, otherwise the first measurement is
//! back-projected (at a default range when only a bearing is available).

use nalgebra::Vector2;

use crate::observation::{Measurement, MeasurementKind, Pose2D};

/// Sine of the minimum ray angle accepted for bearing triangulation.
const MIN_TRIANGULATION_SIN: f64 = 0.05;
/// Minimum pose separation for two-range circle intersection.
const MIN_BASELINE: f64 = 0.1;

/// Where a measurement's ray points, in world coordinates.
fn bearing_direction(pose: &Pose2D, bearing: f64) -> Vector2<f64> {
    let a = pose.heading + bearing;
    Vector2::new(a.cos(), a.sin())
}

fn position(pose: &Pose2D) -> Vector2<f64> {
    Vector2::new(pose.x, pose.y)
}

/// Back-project a single measurement; bearings without range use
/// `default_range`.
fn back_project(meas: &Measurement, pose: &Pose2D, default_range: f64) -> Vector2<f64> {
    match meas.kind {
        MeasurementKind::RangeBearing => {
            position(pose) + meas.value[0] * bearing_direction(pose, meas.value[1])
        }
        MeasurementKind::Bearing => {
            position(pose) + default_range * bearing_direction(pose, meas.value[0])
        }
        MeasurementKind::Range => {
            // Direction unknown; fall back to the heading ray.
            position(pose) + meas.value[0] * bearing_direction(pose, 0.0)
        }
    }
}

/// Intersect two bearing rays; `None` when nearly parallel.
fn intersect_rays(
    p1: Vector2<f64>,
    d1: Vector2<f64>,
    p2: Vector2<f64>,
    d2: Vector2<f64>,
) -> Option<Vector2<f64>> {
    let cross = d1.x * d2.y - d1.y * d2.x;
    if cross.abs() < MIN_TRIANGULATION_SIN {
        return None;
    }
    let dp = p2 - p1;
    let s = (dp.x * d2.y - dp.y * d2.x) / cross;
    if s <= 0.0 {
        return None;
    }
    Some(p1 + s * d1)
}

/// Intersect two range circles; returns both candidates when they exist,
/// else the closest point between the circles.
fn intersect_circles(
    p1: Vector2<f64>,
    r1: f64,
    p2: Vector2<f64>,
    r2: f64,
) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let delta = p2 - p1;
    let d = delta.norm();
    if d < MIN_BASELINE {
        return None;
    }
    let ex = delta / d;
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h2 = r1 * r1 - a * a;
    let h = h2.max(0.0).sqrt();
    let base = p1 + a * ex;
    let perp = Vector2::new(-ex.y, ex.x);
    Some((base + h * perp, base - h * perp))
}

fn range_residual(candidate: &Vector2<f64>, pose: &Pose2D, range: f64) -> f64 {
    ((candidate - position(pose)).norm() - range).abs()
}

/// Estimate an initial landmark position from its first few measurements and
/// the poses at their timestamps. Returns `None` only when `observations`
/// is empty.
pub fn initial_landmark_estimate(
    observations: &[(&Measurement, Pose2D)],
    default_range: f64,
) -> Option<Vector2<f64>> {
    let (first, first_pose) = observations.first()?;

    // Range+bearing back-projection is exact up to noise; take it directly.
    if first.kind == MeasurementKind::RangeBearing {
        return Some(back_project(first, first_pose, default_range));
    }

    match first.kind {
        MeasurementKind::Bearing => {
            let p1 = position(first_pose);
            let d1 = bearing_direction(first_pose, first.value[0]);
            for (other, other_pose) in &observations[1..] {
                if other.kind != MeasurementKind::Bearing {
                    continue;
                }
                let p2 = position(other_pose);
                let d2 = bearing_direction(other_pose, other.value[0]);
                if let Some(hit) = intersect_rays(p1, d1, p2, d2) {
                    return Some(hit);
                }
            }
            Some(back_project(first, first_pose, default_range))
        }
        MeasurementKind::Range => {
            let p1 = position(first_pose);
            let r1 = first.value[0];
            for (other, other_pose) in &observations[1..] {
                if other.kind != MeasurementKind::Range {
                    continue;
                }
                let p2 = position(other_pose);
                let r2 = other.value[0];
                if let Some((ca, cb)) = intersect_circles(p1, r1, p2, r2) {
                    // Disambiguate with a third range when available.
                    let third = observations[1..].iter().find(|(m, p)| {
                        m.kind == MeasurementKind::Range
                            && (position(p) - p2).norm() > MIN_BASELINE
                            && (position(p) - p1).norm() > MIN_BASELINE
                    });
                    return Some(match third {
                        Some((m3, p3)) => {
                            if range_residual(&ca, p3, m3.value[0])
                                <= range_residual(&cb, p3, m3.value[0])
                            {
                                ca
                            } else {
                                cb
                            }
                        }
                        None => ca,
                    });
                }
            }
            Some(back_project(first, first_pose, default_range))
        }
        MeasurementKind::RangeBearing => unreachable!("handled above"),
    }
}
