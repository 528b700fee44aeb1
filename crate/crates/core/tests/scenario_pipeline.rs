//! Simulator-to-estimator round trips over the public pipeline.

use rff_slam::io::Dataset;
use rff_slam::observation::MeasurementKind;
use rff_slam::pipeline::{evaluate_output, run_dataset, PriorChoice, RunOptions};
use rff_slam::sim::{generate_scenario, Scenario, ScenarioConfig};

fn to_dataset(scenario: &Scenario) -> Dataset {
    Dataset {
        ground_truth: Some(scenario.ground_truth.clone()),
        odometry: scenario.odometry.clone(),
        measurements: scenario.measurements.clone(),
        landmark_priors: Vec::new(),
        metadata: Default::default(),
    }
}

#[test]
fn zero_noise_round_trip_keeps_objective_at_zero() {
    // Estimator on a noise-free scenario, initialized at the truth via the
    // ground-truth prior and exact landmark back-projection.
    let scenario = generate_scenario(&ScenarioConfig {
        seed: 21,
        duration: 30.0,
        num_landmarks: 10,
        range_noise_std: 0.0,
        bearing_noise_std: 0.0,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let output = run_dataset(
        &to_dataset(&scenario),
        &RunOptions {
            prior: PriorChoice::Truth,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(
        output.final_objective <= 1e-8,
        "objective {}",
        output.final_objective
    );
}

#[test]
fn motion_prior_run_tracks_the_truth() {
    let scenario = generate_scenario(&ScenarioConfig {
        seed: 22,
        duration: 60.0,
        num_landmarks: 15,
        odometry_linear_noise_std: 0.01,
        odometry_angular_noise_std: 0.001,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let output = run_dataset(
        &to_dataset(&scenario),
        &RunOptions {
            prior: PriorChoice::Motion,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let report = evaluate_output(&output, &scenario.ground_truth).unwrap();
    assert!(report.ape_trans < 1.5, "ape_trans {}", report.ape_trans);
    assert!(report.ape_rot < 0.2, "ape_rot {}", report.ape_rot);

    // The estimate must beat the raw odometry prior on this noisy scenario
    // or at least not be dramatically worse.
    let bad = output.batch_reports.last().unwrap();
    assert!(bad.report.final_objective <= bad.report.initial_objective);
}

#[test]
fn spline_prior_batches_stay_stable() {
    let scenario = generate_scenario(&ScenarioConfig {
        seed: 23,
        duration: 40.0,
        num_landmarks: 10,
        odometry_linear_noise_std: 0.01,
        odometry_angular_noise_std: 0.001,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let output = run_dataset(
        &to_dataset(&scenario),
        &RunOptions {
            prior: PriorChoice::Spline,
            batch_size: Some(200),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(output.batch_reports.len() >= 3);
    let report = evaluate_output(&output, &scenario.ground_truth).unwrap();
    assert!(report.ape_trans < 2.0, "ape_trans {}", report.ape_trans);
}

#[test]
fn range_only_run_reports_motion_headings() {
    let scenario = generate_scenario(&ScenarioConfig {
        seed: 24,
        duration: 40.0,
        num_landmarks: 12,
        measurement_kind: MeasurementKind::Range,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let output = run_dataset(
        &to_dataset(&scenario),
        &RunOptions {
            prior: PriorChoice::Motion,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let report = evaluate_output(&output, &scenario.ground_truth).unwrap();
    assert!(report.ape_rot.is_finite());
    // Motion-direction headings track the truth reasonably well.
    assert!(report.ape_rot < 0.5, "ape_rot {}", report.ape_rot);
}

#[test]
fn bearing_only_scenarios_converge() {
    let scenario = generate_scenario(&ScenarioConfig {
        seed: 25,
        duration: 40.0,
        num_landmarks: 15,
        measurement_kind: MeasurementKind::Bearing,
        odometry_linear_noise_std: 0.01,
        odometry_angular_noise_std: 0.001,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let output = run_dataset(
        &to_dataset(&scenario),
        &RunOptions {
            prior: PriorChoice::Motion,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let report = evaluate_output(&output, &scenario.ground_truth).unwrap();
    assert!(report.ape_trans < 2.0, "ape_trans {}", report.ape_trans);
}
