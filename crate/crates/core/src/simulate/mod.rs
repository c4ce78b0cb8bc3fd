//! Synthetic ground truth and measurements.
//!
//! Truth trajectories are dense-knot splines whose control points are
//! band-limited noise. The noise is generated circularly over one period, so
//! a closed-loop trajectory whose period equals the sequence length returns
//! exactly to its starting pose. The camera looks along body +z; with truth
//! orientations near identity that is world up, away from gravity.

mod scenario;

pub use scenario::{Band, Intrinsics, MotionProfile, Preset, ScenarioConfig};

use log::warn;
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::bspline::{KnotGrid, SplineR3, SplineSO3, Trajectory};
use crate::error::{Error, Result};
use crate::fusion::{FusionProblem, FusionState};
use crate::lie::exp_quat;
use crate::sensors::{
    backproject_ray, default_gravity, predict_accel, predict_gyro, CameraModel, ImuBiases,
    ImuLog, ImuSample, Observation, Pose, TrackSet,
};
use crate::spectral::{dft, idft, Spectrum, UniformSignal};

const STREAM_TEST_SIGNAL: u64 = 1;
const STREAM_ROTATION: u64 = 2;
const STREAM_POSITION: u64 = 3;
const STREAM_IMU: u64 = 4;
const STREAM_LANDMARKS: u64 = 5;
const STREAM_PIXELS: u64 = 6;
const STREAM_SIGNAL_NOISE: u64 = 7;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Landmark with the frame it was created in. The landmark is visible in that
/// frame by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueLandmark {
    pub position: Vector3<f64>,
    pub birth_frame: usize,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub trajectory: Trajectory,
    pub landmarks: Vec<TrueLandmark>,
    pub biases: ImuBiases,
    pub gravity: Vector3<f64>,
}

/// Everything a fusion run consumes, plus the truth that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub config: ScenarioConfig,
    pub camera: CameraModel,
    pub truth: GroundTruth,
    pub imu: ImuLog,
    pub tracks: TrackSet,
}

/// Circular filtered noise: `n` samples at `rate`, one component per band,
/// each scaled to its RMS amplitude.
fn band_noise(rng: &mut ChaCha8Rng, n: usize, rate: f64, bands: &[Band]) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![0.0; n];
    for band in bands {
        let white: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
        if band.amplitude == 0.0 {
            continue;
        }
        let spec = dft(&UniformSignal::new(white, rate, 0.0)?);
        let masked: Vec<Complex64> = spec
            .bins()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let f = spec.bin_frequency(k).abs();
                *c * band.gain(f)
            })
            .collect();
        let component = idft(&Spectrum::new(masked, rate)?);
        let rms = (component.energy() / n as f64).sqrt();
        if rms == 0.0 {
            warn!(
                "band [{}, {}] Hz holds no frequency bin at {rate} Hz over {n} samples",
                band.low_hz, band.high_hz
            );
            continue;
        }
        for (o, v) in out.iter_mut().zip(component.samples()) {
            *o += v * band.amplitude / rms;
        }
    }
    Ok(out)
}

/// Filtered-noise test signal: a sum of band-limited white-noise components.
pub fn generate_test_signal(
    seed: u64,
    duration: f64,
    sample_rate: f64,
    bands: &[Band],
) -> Result<UniformSignal> {
    if !(duration > 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidInput(
            "duration and sample rate must be positive".into(),
        ));
    }
    let n = (duration * sample_rate).round() as usize;
    let mut rng = rng_for(seed, STREAM_TEST_SIGNAL);
    UniformSignal::new(band_noise(&mut rng, n, sample_rate, bands)?, sample_rate, 0.0)
}

/// `n` samples of zero-mean Gaussian noise with std `sigma`, independent of
/// the test-signal stream for the same seed.
pub fn white_noise(seed: u64, n: usize, sigma: f64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(format!("noise: {e}")))?;
    let mut rng = rng_for(seed, STREAM_SIGNAL_NOISE);
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

fn truth_grid(config: &ScenarioConfig) -> Result<(KnotGrid, usize)> {
    let nominal = config.truth_knot_spacing.unwrap_or(4.0 / config.imu_rate);
    let intervals = config.duration / nominal;
    let (dt, intervals) = if config.truth_knot_spacing.is_some() {
        let n = (intervals - 1e-9).ceil() as usize;
        if config.closed_loop && (intervals - n as f64).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "closed loop needs the duration to be a multiple of the truth knot spacing {nominal}"
            )));
        }
        (nominal, n)
    } else {
        let n = intervals.round().max(1.0) as usize;
        (config.duration / n as f64, n)
    };
    let grid = KnotGrid::new(-dt, dt, intervals + 3)?;
    let period = if config.closed_loop {
        intervals
    } else {
        2 * grid.count
    };
    Ok((grid, period))
}

/// Truth trajectory: control points are band-limited noise sampled at the
/// knot rate; control rotations are `Exp` of a band-limited rotation vector.
pub fn generate_trajectory(config: &ScenarioConfig) -> Result<Trajectory> {
    config.validate()?;
    let (grid, period) = truth_grid(config)?;
    let motion = config.motion_profile();
    let knot_rate = 1.0 / grid.dt;
    let axes = |stream: u64, bands: &[Band]| -> Result<Vec<Vec<f64>>> {
        let mut rng = rng_for(config.seed, stream);
        (0..3).map(|_| band_noise(&mut rng, period, knot_rate, bands)).collect()
    };
    let rot = axes(STREAM_ROTATION, &motion.rotation)?;
    let pos = axes(STREAM_POSITION, &motion.position)?;
    // control point k sits at (k − 1)·dt
    let index = |k: usize| (k + period - 1) % period;
    let rotations: Vec<UnitQuaternion<f64>> = (0..grid.count)
        .map(|k| {
            let i = index(k);
            exp_quat(&Vector3::new(rot[0][i], rot[1][i], rot[2][i]))
        })
        .collect();
    let positions: Vec<Vector3<f64>> = (0..grid.count)
        .map(|k| {
            let i = index(k);
            Vector3::new(pos[0][i], pos[1][i], pos[2][i])
        })
        .collect();
    Trajectory::new(
        SplineSO3::new(grid.t0, grid.dt, rotations)?,
        SplineR3::new(grid.t0, grid.dt, positions)?,
    )
}

/// Trajectory plus landmarks. Landmark `i` is born in a frame spread evenly
/// over the sequence, at a random pixel and a random depth along its ray.
pub fn generate_ground_truth(config: &ScenarioConfig) -> Result<GroundTruth> {
    let trajectory = generate_trajectory(config)?;
    let camera = config.camera_model();
    let frames = config.frame_times();
    let mut rng = rng_for(config.seed, STREAM_LANDMARKS);
    let margin = 0.02;
    let mut landmarks = Vec::with_capacity(config.n_landmarks);
    for i in 0..config.n_landmarks {
        let birth_frame = i * frames.len() / config.n_landmarks.max(1);
        let w = camera.width as f64;
        let h = camera.height as f64;
        let px = Vector2::new(
            rng.random_range(margin * w..(1.0 - margin) * w),
            rng.random_range(margin * h..(1.0 - margin) * h),
        );
        let depth = rng.random_range(config.depth_range[0]..=config.depth_range[1]);
        let t = frames[birth_frame] + camera.readout_time * px.y / h;
        let pose = Pose::at(&trajectory, t)?;
        let position = pose.rotation * (backproject_ray(&px, &camera) * depth) + pose.position;
        landmarks.push(TrueLandmark {
            position,
            birth_frame,
        });
    }
    Ok(GroundTruth {
        trajectory,
        landmarks,
        biases: config.biases(),
        gravity: default_gravity(),
    })
}

/// IMU samples at `imu_rate`: truth predictions plus biases plus white noise.
pub fn generate_imu(truth: &GroundTruth, config: &ScenarioConfig) -> Result<ImuLog> {
    let mut rng = rng_for(config.seed, STREAM_IMU);
    let gyro_noise = Normal::new(0.0, config.sigma_gyro)
        .map_err(|e| Error::InvalidInput(format!("gyro noise: {e}")))?;
    let accel_noise = Normal::new(0.0, config.sigma_accel)
        .map_err(|e| Error::InvalidInput(format!("accel noise: {e}")))?;
    let mut noise3 = |d: &Normal<f64>| Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
    let samples = config
        .imu_times()
        .into_iter()
        .map(|t| {
            let omega = predict_gyro(&truth.trajectory, t, &truth.biases)?;
            let accel = predict_accel(&truth.trajectory, t, &truth.biases, &truth.gravity)?;
            Ok(ImuSample {
                t,
                omega: omega + noise3(&gyro_noise),
                accel: accel + noise3(&accel_noise),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ImuLog::new(samples)
}

/// Pixel of a world point seen in the frame starting at `frame_time`, with the
/// capture row solved self-consistently. `None` when not visible.
pub fn rolling_shutter_projection(
    traj: &Trajectory,
    point: &Vector3<f64>,
    frame_time: f64,
    camera: &CameraModel,
    row_guess: f64,
) -> Option<Vector2<f64>> {
    let rows = camera.height as f64;
    let mut row = row_guess.clamp(0.0, rows);
    for _ in 0..50 {
        let t = frame_time + camera.readout_time * row / rows;
        let pose = Pose::at(traj, t).ok()?;
        let px = camera.project(&pose.world_to_body(point)).ok()?;
        if !(px.y > -rows && px.y < 2.0 * rows) {
            return None;
        }
        let converged = (px.y - row).abs() < 1e-10;
        row = px.y.clamp(0.0, rows);
        if converged {
            return camera.contains(&px).then_some(px);
        }
    }
    None
}

/// Tracks every landmark from its birth frame while it stays in view, for at
/// most `max_track_frames` frames. Track length is jittered so tracks end
/// at different times.
pub fn generate_observations(
    truth: &GroundTruth,
    camera: &CameraModel,
    config: &ScenarioConfig,
) -> Result<TrackSet> {
    let frames = config.frame_times();
    let mut rng = rng_for(config.seed, STREAM_PIXELS);
    let pixel_noise = Normal::new(0.0, config.pixel_noise)
        .map_err(|e| Error::InvalidInput(format!("pixel noise: {e}")))?;
    let mut observations = Vec::new();
    let mut excluded = 0usize;
    for (id, lm) in truth.landmarks.iter().enumerate() {
        let max_len = rng.random_range(config.max_track_frames / 2..=config.max_track_frames).max(2);
        let mut track = Vec::new();
        let mut row = camera.height as f64 / 2.0;
        for (m, &t_m) in frames.iter().enumerate().skip(lm.birth_frame).take(max_len) {
            let Some(px) = rolling_shutter_projection(&truth.trajectory, &lm.position, t_m, camera, row) else {
                break;
            };
            row = px.y;
            track.push((m, t_m, px));
        }
        if track.len() < 2 {
            excluded += 1;
            continue;
        }
        for (j, (m, t_m, px)) in track.into_iter().enumerate() {
            let pixel = if j > 0 && config.outlier_rate > 0.0 && rng.random_bool(config.outlier_rate) {
                Vector2::new(
                    rng.random_range(0.0..camera.width as f64),
                    rng.random_range(0.0..camera.height as f64),
                )
            } else {
                let noisy = px + Vector2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng));
                if !camera.contains(&noisy) {
                    continue;
                }
                noisy
            };
            observations.push(Observation {
                track_id: id as u64,
                frame: m as u32,
                pixel,
                frame_time: t_m,
            });
        }
    }
    if excluded > 0 {
        warn!("{excluded} landmarks were visible in fewer than 2 frames and were excluded");
    }
    let mut set = TrackSet::new(observations);
    // pixel noise can push an observation out of view, leaving a single one
    let keep: Vec<u64> = set
        .tracks()
        .filter(|t| t.len() >= 2)
        .map(|t| t[0].track_id)
        .collect();
    set.observations.retain(|o| keep.binary_search(&o.track_id).is_ok());
    Ok(set)
}

/// Removes every observation in a frame starting after `t_end − dropout`.
/// Frame times within 1e-9 s of the cut count as removed, so a dropout of
/// `k` frame periods removes exactly `k` frames.
pub fn apply_dropout(tracks: &TrackSet, dropout_seconds: f64, t_end: f64) -> TrackSet {
    if dropout_seconds <= 0.0 {
        return tracks.clone();
    }
    let cut = t_end - dropout_seconds - 1e-9;
    let kept = tracks
        .observations
        .iter()
        .filter(|o| o.frame_time <= cut)
        .copied()
        .collect();
    TrackSet::new(kept)
}

/// End of the visual sequence: one frame period after the last frame start.
pub fn sequence_end(config: &ScenarioConfig) -> f64 {
    config.frame_times().last().copied().unwrap_or(0.0) + 1.0 / config.frame_rate
}

/// Truth expressed in the estimator's gauge: rotated about gravity so the
/// first control rotation has no twist about the gravity axis, and shifted so
/// the first position control point is at the origin. Measurements are
/// unchanged by this transform.
pub fn gauge_normalized(traj: &Trajectory, gravity: &Vector3<f64>) -> Result<Trajectory> {
    let axis = nalgebra::Unit::new_normalize(*gravity);
    let q0 = traj.rotation.control_rotations()[0];
    let twist = 2.0 * (-q0.imag().dot(&axis)).atan2(q0.w);
    let fix = UnitQuaternion::from_axis_angle(&axis, twist);
    let p0 = traj.position.control_points()[0];
    let rg = traj.rotation.grid();
    let pg = traj.position.grid();
    Trajectory::new(
        SplineSO3::new(rg.t0, rg.dt, traj.rotation.control_rotations().iter().map(|q| fix * q).collect())?,
        SplineR3::new(pg.t0, pg.dt, traj.position.control_points().iter().map(|p| fix * (p - p0)).collect())?,
    )
}

/// Ground-truth parameters for a fusion problem built from the same scenario.
/// The problem's knot grids must equal the truth grids.
pub fn truth_state(truth: &GroundTruth, problem: &FusionProblem) -> Result<FusionState> {
    let traj = gauge_normalized(&truth.trajectory, &truth.gravity)?;
    let est = &problem.initial.trajectory;
    let same = |a: &KnotGrid, b: &KnotGrid| a.count == b.count && (a.t0 - b.t0).abs() < 1e-9 && (a.dt - b.dt).abs() < 1e-12;
    if !same(est.rotation.grid(), traj.rotation.grid()) || !same(est.position.grid(), traj.position.grid()) {
        return Err(Error::InvalidInput("problem knot grids differ from the truth grids".into()));
    }
    let inverse_depth = problem
        .tracks
        .iter()
        .map(|t| {
            let lm = truth
                .landmarks
                .get(t.track_id as usize)
                .ok_or_else(|| Error::InvalidInput(format!("no true landmark for track {}", t.track_id)))?;
            let p = truth.trajectory.position.eval(t.reference_time, 0)?;
            Ok(1.0 / (lm.position - p).norm())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FusionState {
        trajectory: traj,
        inverse_depth,
        biases: truth.biases,
    })
}

pub fn simulate(config: &ScenarioConfig) -> Result<SyntheticData> {
    config.validate()?;
    let camera = config.camera_model();
    let truth = generate_ground_truth(config)?;
    let imu = generate_imu(&truth, config)?;
    let tracks = generate_observations(&truth, &camera, config)?;
    Ok(SyntheticData {
        config: config.clone(),
        camera,
        truth,
        imu,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::observation_time;
    use crate::sew::{select_knot_spacing, FrequencyResponseModel};
    use crate::spectral::{vector_spectrum, ScalarSpectrum};

    fn short(preset: Preset) -> ScenarioConfig {
        ScenarioConfig {
            seed: 11,
            duration: 4.0,
            preset,
            n_landmarks: 120,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn test_signal_determinism_and_zero_bands() {
        let bands = [Band::new(0.1, 2.0, 1.0), Band::new(2.0, 8.0, 0.2)];
        let a = generate_test_signal(3, 10.0, 500.0, &bands).unwrap();
        let b = generate_test_signal(3, 10.0, 500.0, &bands).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
        let rms = (a.energy() / a.len() as f64).sqrt();
        assert!((rms - (1.0f64 + 0.04).sqrt()).abs() < 0.05, "{rms}");
        let c = generate_test_signal(4, 10.0, 500.0, &bands).unwrap();
        assert_ne!(a, c);
        let zero = [Band::new(0.1, 2.0, 0.0)];
        let z = generate_test_signal(3, 10.0, 500.0, &zero).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lower_band_gives_longer_knot_spacing() {
        let slow = generate_test_signal(5, 10.0, 500.0, &[Band::new(0.1, 2.0, 1.0)]).unwrap();
        let fast = generate_test_signal(5, 10.0, 500.0, &[Band::new(0.1, 10.0, 1.0)]).unwrap();
        let m = FrequencyResponseModel::cubic();
        let pick = |s: &UniformSignal| {
            select_knot_spacing(&ScalarSpectrum::from_signal(s), 0.99, 1.0, &m).unwrap().dt
        };
        assert!(pick(&slow) > pick(&fast), "{} vs {}", pick(&slow), pick(&fast));
    }

    #[test]
    fn closed_loop_returns_to_start() {
        for preset in [Preset::Handheld, Preset::Bodycam, Preset::Fast] {
            let cfg = short(preset);
            let traj = generate_trajectory(&cfg).unwrap();
            let p0 = traj.position.eval(0.0, 0).unwrap();
            let p1 = traj.position.eval(cfg.duration, 0).unwrap();
            assert!((p0 - p1).norm() <= 1e-6);
            let r0 = traj.rotation.eval(0.0).unwrap();
            let r1 = traj.rotation.eval(cfg.duration).unwrap();
            assert!((r0 - r1).abs().max() <= 1e-9);
        }
        let open = ScenarioConfig {
            closed_loop: false,
            ..short(Preset::Handheld)
        };
        let traj = generate_trajectory(&open).unwrap();
        let gap = traj.position.eval(0.0, 0).unwrap() - traj.position.eval(open.duration, 0).unwrap();
        assert!(gap.norm() > 1e-3);
    }

    #[test]
    fn static_preset_is_static() {
        let cfg = short(Preset::Static);
        let traj = generate_trajectory(&cfg).unwrap();
        for t in [0.0, 1.3, 4.0] {
            assert!(traj.position.eval(t, 0).unwrap().norm() < 1e-15);
            assert!(traj.rotation.angular_velocity(t).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn halved_cutoff_gives_longer_rotation_knots() {
        let base = short(Preset::Handheld);
        let slow = ScenarioConfig {
            motion: Some(base.motion_profile().scale_frequencies(0.5)),
            ..base.clone()
        };
        let m = FrequencyResponseModel::new(2);
        let pick = |cfg: &ScenarioConfig| {
            let truth = generate_ground_truth(&cfg.noise_free()).unwrap();
            let imu = generate_imu(&truth, &cfg.noise_free()).unwrap();
            let spec = vector_spectrum(&imu.gyro(), cfg.imu_rate).unwrap();
            select_knot_spacing(&spec, 0.99, 1.0, &m).unwrap().dt
        };
        assert!(pick(&slow) > pick(&base));
    }

    #[test]
    fn imu_noise_statistics() {
        let cfg = ScenarioConfig {
            duration: 12.0,
            sigma_gyro: 0.02,
            sigma_accel: 0.3,
            gyro_bias: [0.01, -0.02, 0.005],
            accel_bias: [0.1, 0.0, -0.05],
            ..short(Preset::Bodycam)
        };
        let truth = generate_ground_truth(&cfg).unwrap();
        let imu = generate_imu(&truth, &cfg).unwrap();
        assert!(imu.len() * 3 >= 10_000);
        let mut g = Vec::new();
        let mut a = Vec::new();
        for s in &imu.samples {
            let pg = predict_gyro(&truth.trajectory, s.t, &truth.biases).unwrap();
            let pa = predict_accel(&truth.trajectory, s.t, &truth.biases, &truth.gravity).unwrap();
            g.extend((s.omega - pg).iter().copied());
            a.extend((s.accel - pa).iter().copied());
        }
        for (r, sigma) in [(g, cfg.sigma_gyro), (a, cfg.sigma_accel)] {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let std = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 4.0 * sigma / n.sqrt());
            assert!((std / sigma - 1.0).abs() < 0.05, "{std} vs {sigma}");
        }
        // deterministic
        assert_eq!(generate_imu(&truth, &cfg).unwrap(), imu);
    }

    #[test]
    fn noise_free_imu_equals_prediction() {
        let cfg = short(Preset::Handheld).noise_free();
        let truth = generate_ground_truth(&cfg).unwrap();
        let imu = generate_imu(&truth, &cfg).unwrap();
        for s in imu.samples.iter().step_by(17) {
            let pg = predict_gyro(&truth.trajectory, s.t, &truth.biases).unwrap();
            assert_eq!(s.omega, pg);
        }
    }

    #[test]
    fn static_truth_imu() {
        let cfg = ScenarioConfig {
            gyro_bias: [0.01, 0.02, 0.03],
            accel_bias: [0.1, 0.2, 0.3],
            ..short(Preset::Static).noise_free()
        };
        let truth = generate_ground_truth(&cfg).unwrap();
        let imu = generate_imu(&truth, &cfg).unwrap();
        for s in &imu.samples {
            assert!((s.omega - Vector3::new(0.01, 0.02, 0.03)).norm() < 1e-12);
            assert!((s.accel - Vector3::new(0.1, 0.2, 9.81 + 0.3)).norm() < 1e-12);
        }
    }

    #[test]
    fn static_tracks_are_constant() {
        let cfg = short(Preset::Static).noise_free();
        let data = simulate(&cfg).unwrap();
        assert!(!data.tracks.is_empty());
        for track in data.tracks.tracks() {
            for o in track {
                assert!((o.pixel - track[0].pixel).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rolling_shutter_rows_are_self_consistent() {
        let cfg = ScenarioConfig {
            pixel_noise: 0.0,
            ..short(Preset::Fast)
        };
        let data = simulate(&cfg).unwrap();
        assert!(data.tracks.len() > 500);
        for o in &data.tracks.observations {
            let lm = data.truth.landmarks[o.track_id as usize].position;
            let t = observation_time(o.frame_time, o.pixel.y, &data.camera).unwrap();
            let pose = Pose::at(&data.truth.trajectory, t).unwrap();
            let px = data.camera.project(&pose.world_to_body(&lm)).unwrap();
            assert!((px - o.pixel).norm() <= 1e-6, "{}", (px - o.pixel).norm());
        }
    }

    #[test]
    fn global_shutter_uses_frame_time() {
        let cfg = ScenarioConfig {
            readout_time: 0.0,
            pixel_noise: 0.0,
            ..short(Preset::Handheld)
        };
        let data = simulate(&cfg).unwrap();
        for o in &data.tracks.observations {
            assert_eq!(observation_time(o.frame_time, o.pixel.y, &data.camera).unwrap(), o.frame_time);
        }
    }

    #[test]
    fn tracks_are_valid() {
        let data = simulate(&short(Preset::Bodycam)).unwrap();
        let frames = data.config.frame_times();
        for track in data.tracks.tracks() {
            assert!(track.len() >= 2);
            assert!(track.len() <= data.config.max_track_frames);
            for w in track.windows(2) {
                assert_eq!(w[1].frame, w[0].frame + 1);
            }
            for o in track {
                assert!(data.camera.contains(&o.pixel));
                assert_eq!(o.frame_time, frames[o.frame as usize]);
            }
        }
        let again = simulate(&short(Preset::Bodycam)).unwrap();
        assert_eq!(again.tracks, data.tracks);
    }

    #[test]
    fn dropout_counts_frames() {
        let cfg = ScenarioConfig {
            duration: 10.0,
            n_landmarks: 300,
            ..short(Preset::Handheld)
        };
        let data = simulate(&cfg).unwrap();
        let t_end = sequence_end(&cfg);
        assert_eq!(apply_dropout(&data.tracks, 0.0, t_end), data.tracks);

        let frames_of = |s: &TrackSet| {
            let mut f: Vec<u32> = s.observations.iter().map(|o| o.frame).collect();
            f.sort_unstable();
            f.dedup();
            f
        };
        let all = frames_of(&data.tracks);
        let cut = apply_dropout(&data.tracks, 1.0, t_end);
        let remaining = frames_of(&cut);
        assert_eq!(*all.last().unwrap(), 299);
        assert_eq!(*remaining.last().unwrap(), 269);
        // frames 270..=299 are gone
        assert!(cut.observations.iter().all(|o| o.frame < 270));

        let almost = apply_dropout(&data.tracks, t_end - 1e-6, t_end);
        assert!(!almost.is_empty());
        assert!(almost.observations.iter().all(|o| o.frame == 0));
    }
}
