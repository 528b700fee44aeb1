use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix5, Vector2, Vector5};

use super::state::interpolate_state;
use super::system::{dense_jacobian, dense_prior_precision, LinearizedSystem, Problem, Term};
use super::*;
use crate::features::FeatureBasis;
use crate::observation::{observe, Landmark2D, MeasurementKind};
use crate::priors::ZeroPrior;
use crate::rng::SeededRng;

fn model_with(d: usize, seed: u64) -> TrajectoryModel {
    TrajectoryModel::shared(FeatureBasis::sample(d, 3.0, 1, seed).unwrap(), 1.0).unwrap()
}

fn quick_config(d: usize) -> SolverConfig {
    SolverConfig {
        num_features: d,
        ..SolverConfig::default()
    }
}

/// A fully weight-space scene: the true trajectory is itself a draw from the
/// model (so a "true parameter vector" exists), landmarks sit around it.
struct Scene {
    model: TrajectoryModel,
    state: WeightState,
    truth: DVector<f64>,
    measurements: Vec<Measurement>,
}

#[allow(clippy::too_many_arguments)]
fn make_scene(
    d: usize,
    num_landmarks: usize,
    num_times: usize,
    kind: MeasurementKind,
    range_std: f64,
    bearing_std: f64,
    noise: bool,
    seed: u64,
) -> Scene {
    let mut rng = SeededRng::new(seed);
    let model = model_with(d, seed);
    let mut state = WeightState::new(&model, 1.0).unwrap();

    // Landmarks well outside the ~1 m trajectory cloud.
    let mut truth_landmarks = Vec::new();
    for j in 0..num_landmarks {
        let angle = rng.uniform_in(0.0, std::f64::consts::TAU);
        let radius = rng.uniform_in(3.0, 6.0);
        let lm = Vector2::new(radius * angle.cos(), radius * angle.sin());
        truth_landmarks.push(lm);
        // Weak prior centered slightly off the truth.
        let prior_mean = lm + Vector2::new(rng.normal(0.5), rng.normal(0.5));
        state
            .add_landmark(j as u64, prior_mean, Matrix2::identity() * 1e4)
            .unwrap();
    }

    // True parameters: weights from the prior, landmark entries at truth.
    let mut truth = DVector::zeros(state.layout().total());
    for m in 0..STATE_DIMS {
        let off = state.layout().weight_offset(m);
        for k in 0..state.layout().dims()[m] {
            truth[off + k] = rng.standard_normal();
        }
    }
    for (j, lm) in truth_landmarks.iter().enumerate() {
        let s = state.layout().landmark_slot(j);
        truth[s] = lm.x;
        truth[s + 1] = lm.y;
    }

    let truth_state = state.with_vector(truth.clone()).unwrap();
    let mut measurements = Vec::new();
    for i in 0..num_times {
        let t = i as f64 * 10.0 / num_times as f64;
        let pose = interpolate_state(&truth_state, &model, &ZeroPrior, t).unwrap();
        let j = i % num_landmarks;
        let lm = Landmark2D::new(j as u64, truth_landmarks[j].x, truth_landmarks[j].y);
        let mut z = observe(&pose, &lm, kind).unwrap();
        let stds = match kind {
            MeasurementKind::Range => vec![range_std],
            MeasurementKind::Bearing => vec![bearing_std],
            MeasurementKind::RangeBearing => vec![range_std, bearing_std],
        };
        if noise {
            for (v, s) in z.iter_mut().zip(&stds) {
                *v += rng.normal(*s);
            }
        }
        if kind.has_bearing() {
            let last = z.len() - 1;
            z[last] = crate::observation::wrap(z[last]);
        }
        measurements
            .push(Measurement::with_stds(t, j as u64, kind, z.as_slice().to_vec(), stds).unwrap());
    }

    Scene {
        model,
        state,
        truth,
        measurements,
    }
}

#[test]
fn unknown_landmark_id_is_rejected() {
    let scene = make_scene(8, 2, 10, MeasurementKind::RangeBearing, 0.1, 0.02, false, 1);
    let mut bad = scene.measurements.clone();
    bad[0].landmark_id = 99;
    match assemble_system(&scene.state, &bad, &scene.model, &ZeroPrior) {
        Err(Error::InvalidArgument(_)) => {}
        Err(other) => panic!("unexpected error {other:?}"),
        Ok(_) => panic!("expected an error"),
    }
}

#[test]
fn no_measurements_step_is_pure_prior_pull() {
    let scene = make_scene(6, 2, 1, MeasurementKind::RangeBearing, 0.1, 0.02, false, 2);
    let mut rng = SeededRng::new(3);
    let off_prior = DVector::from_fn(scene.state.layout().total(), |_, _| rng.standard_normal());
    let state = scene.state.with_vector(off_prior.clone()).unwrap();
    let system = assemble_system(&state, &[], &scene.model, &ZeroPrior).unwrap();
    let step = lm_solve(&system, 0.0, 1e-12, None).unwrap();
    let expected = state.prior_mean() - &off_prior;
    assert!((&step - &expected).norm() <= 1e-8 * expected.norm().max(1.0));
}

#[test]
fn linear_terms_match_generalized_least_squares() {
    // Hand-built linear measurement terms; the dense oracle solves the same
    // weighted quadratic directly.
    let model = model_with(4, 5);
    let mut state = WeightState::new(&model, 1.0).unwrap();
    state
        .add_landmark(0, Vector2::new(0.3, -0.4), Matrix2::identity() * 10.0)
        .unwrap();
    let mut rng = SeededRng::new(6);

    let mut terms = Vec::new();
    for i in 0..20 {
        let phi = [
            DVector::from_fn(4, |_, _| rng.standard_normal()),
            DVector::from_fn(4, |_, _| rng.standard_normal()),
            DVector::from_fn(4, |_, _| rng.standard_normal()),
        ];
        let h = DMatrix::from_fn(1, 5, |_, _| rng.standard_normal());
        let sigma = rng.uniform_in(0.2, 1.5);
        let r_inv = DMatrix::from_element(1, 1, 1.0 / (sigma * sigma));
        let residual = DVector::from_element(1, rng.standard_normal());
        let hr = h.tr_mul(&r_inv);
        terms.push(Term {
            phi,
            landmark_index: 0,
            q5: Matrix5::from_iterator((&hr * &h).iter().copied()),
            g5: Vector5::from_iterator((&hr * &residual).iter().copied()),
            h,
            r_inv,
        });
        let _ = i;
    }

    let system = LinearizedSystem::build(terms, &state).unwrap();
    let step = lm_solve(&system, 0.0, 1e-14, Some(10_000)).unwrap();

    // Dense oracle: A = sum J^T R^{-1} J + P^{-1}, g as assembled.
    let mut a = dense_prior_precision(&state);
    for term in system.terms() {
        let j = dense_jacobian(term, &state);
        a += j.tr_mul(&term.r_inv) * &j;
    }
    let expected = a.cholesky().unwrap().solve(system.rhs());
    assert!(
        (&step - &expected).norm() <= 1e-8 * expected.norm(),
        "step error {}",
        (&step - &expected).norm() / expected.norm()
    );
}

#[test]
fn matvec_matches_dense_assembly() {
    let scene = make_scene(8, 3, 25, MeasurementKind::RangeBearing, 0.2, 0.05, true, 7);
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let n = system.dim();
    assert!(n <= 200);

    let mut dense = dense_prior_precision(&scene.state);
    for term in system.terms() {
        let j = dense_jacobian(term, &scene.state);
        dense += j.tr_mul(&term.r_inv) * &j;
    }

    let mut rng = SeededRng::new(8);
    for _ in 0..10 {
        let v = DVector::from_fn(n, |_, _| rng.standard_normal());
        let fast = system.apply(&v);
        let slow = &dense * &v;
        assert!(
            (&fast - &slow).norm() <= 1e-10 * slow.norm(),
            "relative deviation {}",
            (&fast - &slow).norm() / slow.norm()
        );
    }

    // Exact diagonal.
    for i in 0..n {
        assert_relative_eq!(system.diagonal()[i], dense[(i, i)], max_relative = 1e-10);
    }
}

#[test]
fn operator_is_self_adjoint() {
    let scene = make_scene(10, 4, 40, MeasurementKind::RangeBearing, 0.3, 0.03, true, 9);
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let mut rng = SeededRng::new(10);
    for _ in 0..10 {
        let u = DVector::from_fn(system.dim(), |_, _| rng.standard_normal());
        let v = DVector::from_fn(system.dim(), |_, _| rng.standard_normal());
        let left = system.apply(&u).dot(&v);
        let right = u.dot(&system.apply(&v));
        assert_relative_eq!(left, right, max_relative = 1e-8);
    }
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_and_sequential_matvec_are_bit_identical() {
    let scene = make_scene(
        12,
        5,
        300,
        MeasurementKind::RangeBearing,
        0.3,
        0.03,
        true,
        11,
    );
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let mut rng = SeededRng::new(12);
    for _ in 0..5 {
        let v = DVector::from_fn(system.dim(), |_, _| rng.standard_normal());
        let par = system.apply(&v);
        let seq = system.apply_sequential(&v);
        for i in 0..system.dim() {
            assert_eq!(par[i].to_bits(), seq[i].to_bits(), "component {i} differs");
        }
    }
}

#[test]
fn assembled_rhs_matches_objective_gradient() {
    // g = -grad f at the linearization point, checked by central differences
    // of the MAP objective.
    let scene = make_scene(6, 2, 15, MeasurementKind::RangeBearing, 0.2, 0.05, true, 13);
    let mut rng = SeededRng::new(14);
    let b0 = DVector::from_fn(scene.state.layout().total(), |i, _| {
        scene.truth[i] + 0.1 * rng.standard_normal()
    });
    let state = scene.state.with_vector(b0.clone()).unwrap();
    let problem = Problem::new(&state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let system = problem.assemble(&state).unwrap();
    let g = system.rhs();

    let h = 1e-6;
    for i in 0..b0.len() {
        let mut plus = b0.clone();
        let mut minus = b0.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (problem.objective_of_vector(&state, &plus)
            - problem.objective_of_vector(&state, &minus))
            / (2.0 * h);
        let analytic = -g[i];
        assert!(
            (fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-3),
            "coordinate {i}: fd {fd} vs -g {analytic}"
        );
    }
}

#[test]
fn lm_solve_matches_dense_at_zero_damping() {
    let scene = make_scene(8, 3, 30, MeasurementKind::RangeBearing, 0.2, 0.05, true, 15);
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let mut dense = dense_prior_precision(&scene.state);
    for term in system.terms() {
        let j = dense_jacobian(term, &scene.state);
        dense += j.tr_mul(&term.r_inv) * &j;
    }
    let expected = dense.cholesky().unwrap().solve(system.rhs());
    let got = lm_solve(&system, 0.0, 1e-12, Some(10_000)).unwrap();
    assert!(
        (&got - &expected).norm() <= 1e-6 * expected.norm(),
        "relative error {}",
        (&got - &expected).norm() / expected.norm()
    );
}

#[test]
fn heavy_damping_shrinks_the_step() {
    let scene = make_scene(8, 3, 30, MeasurementKind::RangeBearing, 0.2, 0.05, true, 16);
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let lambda = 1e8;
    let step = lm_solve(&system, lambda, 1e-10, None).unwrap();
    // delta ~ g / (lambda diag); bound by the undamped diagonal scale.
    let scale = system.rhs().component_div(system.diagonal()).norm();
    assert!(
        step.norm() <= 1e-6 * scale,
        "step {} scale {scale}",
        step.norm()
    );
}

#[test]
fn zero_rhs_gives_zero_step() {
    // Measurements exactly consistent with the prior mean state (b = mu):
    // both the residuals and the prior pull vanish.
    let model = model_with(6, 17);
    let mut state = WeightState::new(&model, 1.0).unwrap();
    let landmarks = [Vector2::new(4.0, 1.0), Vector2::new(-3.0, 2.0)];
    for (j, lm) in landmarks.iter().enumerate() {
        state
            .add_landmark(j as u64, *lm, Matrix2::identity() * 1e4)
            .unwrap();
    }
    let prior = |t: f64| Pose2D::new(0.2 * t, -0.1 * t, 0.05 * t);
    let measurements: Vec<Measurement> = (0..10)
        .map(|i| {
            let t = i as f64 * 0.7;
            let j = i % 2;
            let pose = prior(t);
            let lm = Landmark2D::new(j as u64, landmarks[j].x, landmarks[j].y);
            let z = observe(&pose, &lm, MeasurementKind::RangeBearing).unwrap();
            Measurement::with_stds(
                t,
                j as u64,
                MeasurementKind::RangeBearing,
                z.as_slice().to_vec(),
                vec![0.1, 0.02],
            )
            .unwrap()
        })
        .collect();
    let system = assemble_system(&state, &measurements, &model, &prior).unwrap();
    assert!(
        system.rhs().norm() < 1e-9,
        "rhs norm {}",
        system.rhs().norm()
    );
    let step = lm_solve(&system, 0.0, 1e-10, None).unwrap();
    assert_eq!(step.norm(), 0.0);
}

#[test]
fn lm_solve_rejects_negative_lambda() {
    let scene = make_scene(
        6,
        2,
        10,
        MeasurementKind::RangeBearing,
        0.1,
        0.02,
        false,
        18,
    );
    let system =
        assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    assert!(lm_solve(&system, -1.0, 1e-8, None).is_err());
}

#[test]
fn update_state_is_a_fixed_point_at_consistent_truth() {
    // Noise-free data generated from the prior-mean state itself: the
    // objective starts at zero and stays there.
    let scene = make_scene(
        8,
        3,
        30,
        MeasurementKind::RangeBearing,
        0.1,
        0.02,
        false,
        19,
    );
    let mut state = scene.state.with_vector(scene.truth.clone()).unwrap();
    for j in 0..state.layout().num_landmarks() {
        let p = state.landmark_position(j);
        state.set_landmark_prior_mean(j, p);
    }
    // Weights of the truth become the new prior mean by construction: shift
    // the prior mean vector onto the truth so b = mu exactly.
    let truth_state = state.clone();
    let mut prior_mean = truth_state.prior_mean().clone();
    for m in 0..STATE_DIMS {
        let off = truth_state.layout().weight_offset(m);
        for k in 0..truth_state.layout().dims()[m] {
            prior_mean[off + k] = scene.truth[off + k];
        }
    }
    // Rebuild an equivalent problem in terms of a trajectory prior equal to
    // the truth: zero weights, measurements consistent with the prior mean.
    let truth_vec = scene.truth.clone();
    let model = scene.model.clone();
    let truth_for_prior = truth_state.with_vector(truth_vec).unwrap();
    let prior = move |t: f64| interpolate_state(&truth_for_prior, &model, &ZeroPrior, t).unwrap();

    let mut fresh = WeightState::new(&scene.model, 1.0).unwrap();
    for j in 0..scene.state.layout().num_landmarks() {
        let p = scene
            .state
            .with_vector(scene.truth.clone())
            .unwrap()
            .landmark_position(j);
        fresh
            .add_landmark(j as u64, p, Matrix2::identity() * 1e4)
            .unwrap();
    }
    let config = quick_config(8);
    let (solved, report) =
        update_state(fresh, &scene.measurements, &scene.model, &prior, &config).unwrap();
    assert!(report.converged);
    assert!(report.iterations <= 2, "iterations {}", report.iterations);
    assert!(
        report.final_objective <= 1e-10,
        "objective {}",
        report.final_objective
    );
    let _ = solved;
}

#[test]
fn update_state_matches_or_beats_truth_objective() {
    let scene = make_scene(
        20,
        5,
        30,
        MeasurementKind::RangeBearing,
        0.1,
        0.03,
        true,
        20,
    );
    let problem =
        Problem::new(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap();
    let truth_objective = problem.objective_of_vector(&scene.state, &scene.truth);

    let config = SolverConfig {
        num_features: 20,
        max_iterations: 100,
        ..SolverConfig::default()
    };
    let (solved, report) = update_state(
        scene.state.clone(),
        &scene.measurements,
        &scene.model,
        &ZeroPrior,
        &config,
    )
    .unwrap();
    assert!(
        report.final_objective <= truth_objective + 1e-6,
        "final {} vs truth {}",
        report.final_objective,
        truth_objective
    );

    // Accepted objectives never increase.
    for w in report.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "trace increased: {w:?}");
    }
    let _ = solved;
}

#[test]
fn incremental_single_batch_equals_batch_solve() {
    let scene = make_scene(
        10,
        4,
        24,
        MeasurementKind::RangeBearing,
        0.2,
        0.04,
        true,
        21,
    );
    let config = quick_config(10);

    let mut inc = IncrementalEstimator::new(
        config.clone(),
        scene.model.clone(),
        std::sync::Arc::new(ZeroPrior),
        PriorRefresh::Fixed,
        scene.measurements.len(),
    )
    .unwrap();
    inc.push(&scene.measurements).unwrap();

    let mut manual = WeightState::new(&scene.model, config.weight_prior_scale).unwrap();
    initialize_landmarks(
        &mut manual,
        &scene.measurements,
        &scene.model,
        &ZeroPrior,
        &config,
    )
    .unwrap();
    let (manual_state, _) = update_state(
        manual,
        &scene.measurements,
        &scene.model,
        &ZeroPrior,
        &config,
    )
    .unwrap();

    assert_eq!(inc.state().vector(), manual_state.vector());
}

#[test]
fn incremental_batch_sizes_reach_similar_objectives() {
    let scene = make_scene(
        10,
        4,
        20,
        MeasurementKind::RangeBearing,
        0.2,
        0.04,
        true,
        22,
    );
    let config = quick_config(10);
    let run = |batch: usize| {
        let mut inc = IncrementalEstimator::new(
            config.clone(),
            scene.model.clone(),
            std::sync::Arc::new(ZeroPrior),
            PriorRefresh::Fixed,
            batch,
        )
        .unwrap();
        inc.push(&scene.measurements).unwrap();
        inc.flush().unwrap();
        map_objective(inc.state(), &scene.measurements, &scene.model, &ZeroPrior).unwrap()
    };
    let single = run(scene.measurements.len());
    let batched = run(5);
    let fine = run(1);
    assert!((batched - single).abs() <= 0.1 * single.abs().max(1e-9));
    assert!((fine - batched).abs() <= 0.1 * batched.abs().max(1e-9));
}

#[test]
fn incremental_empty_push_is_noop() {
    let scene = make_scene(6, 2, 8, MeasurementKind::RangeBearing, 0.1, 0.02, false, 23);
    let mut inc = IncrementalEstimator::new(
        quick_config(6),
        scene.model.clone(),
        std::sync::Arc::new(ZeroPrior),
        PriorRefresh::Fixed,
        4,
    )
    .unwrap();
    inc.push(&scene.measurements).unwrap();
    let before = inc.state().vector().clone();
    inc.push(&[]).unwrap();
    assert_eq!(&before, inc.state().vector());
}

#[test]
fn heading_from_motion_axis_aligned() {
    let mut along_x = Trajectory::empty();
    let mut along_y = Trajectory::empty();
    for i in 0..10 {
        let s = i as f64;
        along_x.push(s, Pose2D::new(s, 0.0, 1.0)).unwrap();
        along_y.push(s, Pose2D::new(0.0, s, 1.0)).unwrap();
    }
    for p in heading_from_motion(&along_x).unwrap().poses() {
        assert_relative_eq!(p.heading, 0.0, epsilon = 1e-12);
    }
    for p in heading_from_motion(&along_y).unwrap().poses() {
        assert_relative_eq!(p.heading, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }
}

#[test]
fn heading_from_motion_follows_circle_tangent() {
    let n = 100;
    let mut traj = Trajectory::empty();
    for i in 0..n {
        let theta = i as f64 * std::f64::consts::TAU / n as f64;
        traj.push(
            i as f64,
            Pose2D::new(10.0 * theta.cos(), 10.0 * theta.sin(), 0.0),
        )
        .unwrap();
    }
    let with_headings = heading_from_motion(&traj).unwrap();
    for (i, (_, p)) in with_headings.iter().enumerate().take(n - 1) {
        let theta = i as f64 * std::f64::consts::TAU / n as f64;
        let tangent = theta + std::f64::consts::FRAC_PI_2;
        let dev = crate::observation::wrap(p.heading - tangent).abs();
        assert!(dev < 0.1, "index {i}: deviation {dev}");
    }
}

#[test]
fn heading_from_motion_needs_two_points() {
    let mut traj = Trajectory::empty();
    traj.push(0.0, Pose2D::origin()).unwrap();
    assert!(heading_from_motion(&traj).is_err());
}

#[test]
fn checkpoint_json_round_trip() {
    let scene = make_scene(6, 2, 8, MeasurementKind::RangeBearing, 0.1, 0.02, true, 24);
    let state = scene.state.with_vector(scene.truth.clone()).unwrap();
    let checkpoint = Checkpoint {
        model: scene.model.clone(),
        state,
    };
    let json = checkpoint.to_json().unwrap();
    let back = Checkpoint::from_json(&json).unwrap();
    assert_eq!(checkpoint, back);
}

#[test]
fn matvec_cost_scales_linearly_in_measurements() {
    // Wall-clock ratio test: doubling N should roughly double matvec cost.
    // Rounds are interleaved across sizes and the per-size minimum kept, so
    // scheduling noise from concurrently running tests cancels out.
    let sizes = [100usize, 200, 400];
    let scenes: Vec<Scene> = sizes
        .iter()
        .map(|&n| make_scene(16, 8, n, MeasurementKind::RangeBearing, 0.2, 0.04, true, 25))
        .collect();
    let systems: Vec<LinearizedSystem> = scenes
        .iter()
        .map(|scene| {
            assemble_system(&scene.state, &scene.measurements, &scene.model, &ZeroPrior).unwrap()
        })
        .collect();
    let probes: Vec<DVector<f64>> = systems
        .iter()
        .map(|sys| DVector::from_element(sys.dim(), 0.5))
        .collect();

    let mut best = [f64::INFINITY; 3];
    for _round in 0..7 {
        for (i, system) in systems.iter().enumerate() {
            let reps = 2_000_000 / sizes[i];
            let mut sink = system.apply_sequential(&probes[i]);
            let start = std::time::Instant::now();
            for _ in 0..reps {
                sink = system.apply_sequential(&probes[i]);
            }
            let per_call = start.elapsed().as_secs_f64() / reps as f64;
            assert!(!sink.is_empty());
            best[i] = best[i].min(per_call);
        }
    }

    let points: Vec<(f64, f64)> = sizes
        .iter()
        .zip(&best)
        .map(|(&n, &t)| ((n as f64).ln(), t.ln()))
        .collect();
    // Least-squares slope through the three log-log points.
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    assert!(
        (0.7..=1.4).contains(&slope),
        "log-log slope {slope} from {points:?}"
    );
}
