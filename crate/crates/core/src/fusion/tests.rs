use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::Layout;
use super::residuals::{accel_block, gyro_block, imu_residuals, pose_eval, reprojection_block, track_reprojections};
use super::*;
use crate::lie::exp_quat;
use crate::simulate::{simulate, truth_state, Preset, ScenarioConfig, SyntheticData};

fn scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        duration: 2.0,
        imu_rate: 200.0,
        n_landmarks: 80,
        max_track_frames: 16,
        preset: Preset::Handheld,
        gyro_bias: [0.01, -0.02, 0.005],
        accel_bias: [0.05, 0.02, -0.03],
        ..ScenarioConfig::default()
    }
}

fn exact_config(data: &SyntheticData) -> FusionConfig {
    let dt = data.truth.trajectory.rotation.knot_spacing();
    FusionConfig {
        knot_spacing: Some([dt, dt]),
        ..FusionConfig::default()
    }
}

fn problem_for(data: &SyntheticData, config: &FusionConfig) -> FusionProblem {
    let plan = plan_weights(&data.imu, config).unwrap();
    build_problem(&data.tracks, &data.imu, &data.camera, &plan, config).unwrap()
}

fn perturbed(state: &FusionState, rng: &mut ChaCha8Rng, scale: f64) -> FusionState {
    let mut s = state.clone();
    let n = s.trajectory.rotation.control_rotations().len();
    for k in 0..n {
        let d = Vector3::from_fn(|_, _| rng.random_range(-scale..scale));
        let q = exp_quat(&d) * s.trajectory.rotation.control_rotations()[k];
        s.trajectory.rotation.set_control(k, q);
    }
    for cp in s.trajectory.position.control_points_mut() {
        *cp += Vector3::from_fn(|_, _| rng.random_range(-scale..scale));
    }
    for rho in &mut s.inverse_depth {
        *rho *= 1.0 + rng.random_range(-0.3..0.3);
    }
    s.biases.gyro += Vector3::from_fn(|_, _| rng.random_range(-0.01..0.01));
    s.biases.accel += Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
    s
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    let data = simulate(&scenario(3)).unwrap();
    let config = exact_config(&data);
    let problem = problem_for(&data, &config);
    let truth = truth_state(&data.truth, &problem).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..10 {
        let state = perturbed(&truth, &mut rng, 0.02);
        let check = jacobian_check(&problem, &state, 5, 1e-6, i).unwrap();
        assert!(check.columns > 0);
        assert!(check.max() <= 1e-4, "{check:?}");
    }
}

#[test]
fn residual_blocks_match_residual_functions() {
    let data = simulate(&scenario(3)).unwrap();
    let problem = problem_for(&data, &exact_config(&data));
    let truth = truth_state(&data.truth, &problem).unwrap();
    let state = perturbed(&truth, &mut ChaCha8Rng::seed_from_u64(4), 0.02);
    let layout = Layout::new(&state.trajectory, &problem.gravity, true);
    let traj = &state.trajectory;
    for (k, track) in problem.tracks.iter().enumerate().take(20) {
        let reference = pose_eval(traj, track.reference_time).unwrap();
        let direct = track_reprojections(&problem, &state, track, state.inverse_depth[k]).unwrap();
        for (o, r) in track.observations.iter().zip(direct) {
            let observer = pose_eval(traj, o.t).unwrap();
            let b = reprojection_block(&problem, &layout, &reference, &observer, &track.ray, state.inverse_depth[k], &o.observation.pixel, layout.dim + k);
            assert_eq!(b.is_some(), r.is_some());
            if let (Some(b), Some(r)) = (b, r) {
                assert!((b.residual - r).norm() < 1e-9);
            }
        }
    }
    for sample in problem.imu.iter().step_by(37) {
        let pose = pose_eval(traj, sample.t).unwrap();
        let gb = gyro_block(&layout, &pose, sample, &state.biases.gyro);
        let ab = accel_block(&layout, traj, &pose, sample, &state.biases.accel, &problem.gravity).unwrap();
        let (rg, ra) = imu_residuals(&state, sample, &problem.gravity).unwrap();
        assert!((rg - gb.residual).norm() < 1e-12 && (ra - ab.residual).norm() < 1e-9);
    }
}

#[test]
fn truth_is_a_fixed_point_of_noise_free_problem() {
    let cfg = scenario(5).noise_free();
    let data = simulate(&cfg).unwrap();
    let config = exact_config(&data);
    let problem = problem_for(&data, &config);
    let truth = truth_state(&data.truth, &problem).unwrap();
    let cost = total_cost(&problem, &truth).unwrap();
    assert!(cost < 1e-12, "cost at truth {cost}");
    let problem = problem.with_initial(truth).unwrap();
    let sol = optimize(&problem, &config).unwrap();
    assert_eq!(sol.report.termination, Termination::GradientTolerance);
    assert_eq!(sol.report.iterations, 0);
}

#[test]
fn recovers_truth_from_cold_start() {
    let cfg = scenario(8).noise_free();
    let data = simulate(&cfg).unwrap();
    let config = FusionConfig {
        max_iterations: 200,
        ..exact_config(&data)
    };
    let problem = problem_for(&data, &config);
    let sol = optimize(&problem, &config).unwrap();
    let r = &sol.report;
    assert!(r.final_cost <= r.initial_cost);
    assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.reprojection.rms <= 1e-3, "reprojection rms {}", r.reprojection.rms);
    let b = sol.biases();
    assert!((b.gyro - data.truth.biases.gyro).amax() <= 1e-4, "gyro bias {:?}", b.gyro);
    assert!((b.accel - data.truth.biases.accel).amax() <= 1e-4, "accel bias {:?}", b.accel);
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * cfg.duration / 100.0).collect();
    let rms = position_rms(sol.trajectory(), &data.truth.trajectory, &times).unwrap();
    assert!(rms <= 1e-3, "position rms {rms}");
}

#[test]
fn doubling_gamma_doubles_imu_cost() {
    let data = simulate(&scenario(1)).unwrap();
    let config = exact_config(&data);
    let problem = problem_for(&data, &config);
    let state = problem.initial.clone();
    let base = residuals::evaluate_cost(&problem, &state).unwrap();
    let mut doubled = problem.clone();
    doubled.gamma_gyro *= 2.0;
    doubled.gamma_accel *= 2.0;
    let c = residuals::evaluate_cost(&doubled, &state).unwrap();
    assert!((c.gyro - 2.0 * base.gyro).abs() <= 1e-12 * base.gyro);
    assert!((c.accel - 2.0 * base.accel).abs() <= 1e-12 * base.accel);
    assert_eq!(c.reprojection, base.reprojection);
}

#[test]
fn weight_scale_factor_scales_gammas() {
    let data = simulate(&scenario(1)).unwrap();
    let config = exact_config(&data);
    let plan = plan_weights(&data.imu, &config).unwrap();
    let p1 = build_problem(&data.tracks, &data.imu, &data.camera, &plan, &config).unwrap();
    let scaled = FusionConfig {
        weight_scale_factor: 10.0,
        ..config.clone()
    };
    let p10 = build_problem(&data.tracks, &data.imu, &data.camera, &plan, &scaled).unwrap();
    assert!((p10.gamma_gyro - 10.0 * plan.gyro.gamma).abs() <= 1e-9 * p10.gamma_gyro);
    assert!((p10.gamma_accel - 10.0 * plan.accel.gamma).abs() <= 1e-9 * p10.gamma_accel);
    assert_eq!(p1.gamma_gyro, plan.gyro.gamma);
    let inverse = FusionConfig {
        weighting: Weighting::InverseNoise,
        ..config
    };
    let pn = build_problem(&data.tracks, &data.imu, &data.camera, &plan, &inverse).unwrap();
    assert!((pn.gamma_gyro - 1.0 / 0.005f64.powi(2)).abs() < 1e-6);
}

#[test]
fn splines_cover_ten_second_log() {
    let cfg = ScenarioConfig {
        duration: 10.0,
        n_landmarks: 40,
        ..scenario(2)
    };
    let data = simulate(&cfg).unwrap();
    let config = FusionConfig {
        knot_spacing: Some([0.05, 0.1]),
        ..FusionConfig::default()
    };
    let problem = problem_for(&data, &config);
    let traj = &problem.initial.trajectory;
    assert!(traj.rotation.control_rotations().len() >= (10.0f64 / 0.05).ceil() as usize + 3);
    assert!(traj.valid_start() <= 0.0 && traj.valid_end() >= 10.0);
    let (a, b) = problem.time_span();
    assert!(traj.valid_start() <= a && traj.valid_end() >= b);
}

#[test]
fn displaced_observation_gives_unit_residual() {
    let cfg = scenario(4).noise_free();
    let mut data = simulate(&cfg).unwrap();
    let track_id = data.tracks.observations[0].track_id;
    let idx = data.tracks.observations.iter().position(|o| o.track_id == track_id && o.frame > data.tracks.observations[0].frame).unwrap();
    data.tracks.observations[idx].pixel += Vector2::new(1.0, 0.0);
    let config = exact_config(&data);
    let problem = problem_for(&data, &config);
    let truth = truth_state(&data.truth, &problem).unwrap();
    let track = problem.tracks.iter().position(|t| t.track_id == track_id).unwrap();
    let res = track_reprojections(&problem, &truth, &problem.tracks[track], truth.inverse_depth[track]).unwrap();
    assert!((res[0].unwrap().norm() - 1.0).abs() < 1e-6);
    assert!(res[1..].iter().all(|r| r.unwrap().norm() < 1e-6));
}

#[test]
fn rejects_empty_tracks_and_imu_gaps() {
    let data = simulate(&scenario(6)).unwrap();
    let config = exact_config(&data);
    let plan = plan_weights(&data.imu, &config).unwrap();
    let empty = TrackSet::new(Vec::new());
    assert!(matches!(build_problem(&empty, &data.imu, &data.camera, &plan, &config), Err(Error::Build(_))));
    let mut samples = data.imu.samples.clone();
    samples.drain(100..200);
    let gappy = ImuLog::new(samples).unwrap();
    assert!(matches!(build_problem(&data.tracks, &gappy, &data.camera, &plan, &config), Err(Error::Build(_))));
}

#[test]
fn non_finite_initial_cost_names_the_block() {
    let data = simulate(&scenario(7)).unwrap();
    let config = exact_config(&data);
    let mut problem = problem_for(&data, &config);
    problem.imu[10].omega.x = f64::NAN;
    match optimize(&problem, &config) {
        Err(Error::Solver(msg)) => assert!(msg.contains("sample 10"), "{msg}"),
        other => panic!("expected a solver error, got {other:?}"),
    }
}
