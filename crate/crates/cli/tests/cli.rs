//! End-to-end checks of the command-line interface.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rff-slam"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "simulate",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "4",
            "--duration",
            "15",
            "--num-landmarks",
            "5",
        ]);
    }
    assert_eq!(read(&a.join("scenario.txt")), read(&b.join("scenario.txt")));
    assert_eq!(read(&a.join("config.json")), read(&b.join("config.json")));
}

#[test]
fn simulate_rejects_invalid_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate",
            "--out",
            dir.path().to_str().unwrap(),
            "--range-noise=-2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("range_noise_std"), "stderr: {stderr}");
}

#[test]
fn unknown_flags_print_usage() {
    let out = bin().args(["simulate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn seed_sweep_emits_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "simulate",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "0",
        "--seeds",
        "10",
        "--duration",
        "10",
        "--num-landmarks",
        "4",
    ]);
    let scenario_dirs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("seed_"))
        .collect();
    assert_eq!(scenario_dirs.len(), 10);
    for entry in scenario_dirs {
        assert!(entry.path().join("scenario.txt").exists());
    }
}

#[test]
fn zero_noise_run_reports_tiny_objective() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("scn");
    run_ok(&[
        "simulate",
        "--out",
        scn.to_str().unwrap(),
        "--seed",
        "2",
        "--duration",
        "20",
        "--num-landmarks",
        "6",
        "--range-noise",
        "0",
        "--bearing-noise-deg",
        "0",
        "--odom-noise-v",
        "0",
        "--odom-noise-w",
        "0",
    ]);
    let out_dir = dir.path().join("run");
    run_ok(&[
        "run",
        "--dataset",
        scn.join("scenario.txt").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--prior",
        "truth",
    ]);
    let log = std::fs::read_to_string(out_dir.join("convergence.jsonl")).unwrap();
    let last: serde_json::Value =
        serde_json::from_str(log.lines().last().expect("non-empty log")).unwrap();
    let objective = last["report"]["final_objective"].as_f64().unwrap();
    assert!(objective < 1e-6, "objective {objective}");
}

#[test]
fn motion_prior_without_odometry_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    // Dataset with measurements but no ODOMETRY records.
    let ds = dir.path().join("ds.txt");
    std::fs::write(
        &ds,
        "MEASUREMENT 0.0 0 range_bearing 5.0 0.1 0.5 0.05\n\
         MEASUREMENT 1.0 0 range_bearing 5.1 0.2 0.5 0.05\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "run",
            "--dataset",
            ds.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
            "--prior",
            "motion",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("odometry"));
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("scn");
    run_ok(&[
        "simulate",
        "--out",
        scn.to_str().unwrap(),
        "--seed",
        "6",
        "--duration",
        "15",
        "--num-landmarks",
        "5",
    ]);
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    for out in [&r1, &r2] {
        run_ok(&[
            "run",
            "--dataset",
            scn.join("scenario.txt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--prior",
            "motion",
        ]);
    }
    for file in [
        "trajectory.csv",
        "landmarks.csv",
        "metrics.json",
        "convergence.jsonl",
    ] {
        assert_eq!(read(&r1.join(file)), read(&r2.join(file)), "{file} differs");
    }
}

#[test]
fn eval_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("scn");
    run_ok(&[
        "simulate",
        "--out",
        scn.to_str().unwrap(),
        "--seed",
        "8",
        "--duration",
        "15",
        "--num-landmarks",
        "5",
    ]);
    let run_dir = dir.path().join("run");
    run_ok(&[
        "run",
        "--dataset",
        scn.join("scenario.txt").to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--prior",
        "motion",
    ]);

    // Ground truth as CSV for the eval subcommand.
    let estimate = rff_slam::io::load_trajectory_csv(&run_dir.join("trajectory.csv")).unwrap();
    let dataset = rff_slam::io::load_dataset(
        &scn.join("scenario.txt"),
        rff_slam::io::DatasetFormat::Canonical,
        &rff_slam::io::LoadOptions::default(),
    )
    .unwrap();
    let truth = dataset.ground_truth.unwrap();
    let truth_csv = dir.path().join("truth.csv");
    rff_slam::io::save_trajectory_csv(&truth, &truth_csv).unwrap();

    let eval_dir = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--estimate",
        run_dir.join("trajectory.csv").to_str().unwrap(),
        "--truth",
        truth_csv.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);

    let aligned = truth.resample_at(estimate.times()).unwrap();
    let expected = rff_slam::eval::evaluate(&estimate, &aligned).unwrap();
    let expected_json = serde_json::to_string_pretty(&expected).unwrap();
    let got = std::fs::read_to_string(eval_dir.join("metrics.json")).unwrap();
    assert_eq!(expected_json, got);
}

#[test]
fn eval_of_identical_and_shifted_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = String::from("t,x,y,heading\n");
    let mut shifted = String::from("t,x,y,heading\n");
    for i in 0..20 {
        let t = i as f64 * 0.5;
        let (x, y, h) = (t.cos(), t.sin(), 0.1 * t);
        base.push_str(&format!("{t},{x},{y},{h}\n"));
        shifted.push_str(&format!("{t},{},{y},{h}\n", x + 1.0));
    }
    let base_path = dir.path().join("base.csv");
    let shifted_path = dir.path().join("shifted.csv");
    std::fs::write(&base_path, &base).unwrap();
    std::fs::write(&shifted_path, &shifted).unwrap();

    let same = dir.path().join("same");
    run_ok(&[
        "eval",
        "--estimate",
        base_path.to_str().unwrap(),
        "--truth",
        base_path.to_str().unwrap(),
        "--out",
        same.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(same.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["ape_trans"].as_f64().unwrap(), 0.0);

    let shift = dir.path().join("shift");
    run_ok(&[
        "eval",
        "--estimate",
        shifted_path.to_str().unwrap(),
        "--truth",
        base_path.to_str().unwrap(),
        "--out",
        shift.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(shift.join("metrics.json")).unwrap())
            .unwrap();
    let ape = report["ape_trans"].as_f64().unwrap();
    assert!((ape - 1.0).abs() < 1e-12, "ape {ape}");
}

#[test]
fn sweep_writes_summary_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--seeds",
        "2",
        "--range-noises",
        "2",
        "--bearing-noises-deg",
        "3",
        "--kinds",
        "range_bearing",
        "--duration",
        "12",
        "--landmark-counts",
        "5",
        "--parallel-scenarios",
        "2",
    ]);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "summary:\n{summary}");
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("config.json").exists());
}
