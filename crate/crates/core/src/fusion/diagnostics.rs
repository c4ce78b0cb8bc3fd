use nalgebra::{SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layout::Layout;
use super::residuals::{accel_block, gyro_block, imu_residuals, pose_eval, reprojection_block, track_reprojections};
use super::solver::{apply, Step};
use super::{FusionProblem, FusionState};
use crate::error::{Error, Result};

/// Largest relative mismatch between analytic Jacobian columns and central
/// differences, per residual type.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct JacobianCheck {
    pub reprojection: f64,
    pub gyro: f64,
    pub accel: f64,
    pub columns: usize,
}

impl JacobianCheck {
    pub fn max(&self) -> f64 {
        self.reprojection.max(self.gyro).max(self.accel)
    }
}

fn unit_step(layout: &Layout, landmarks: usize, index: usize, h: f64) -> Step {
    let mut trajectory = vec![0.0; layout.dim];
    let mut lm = vec![0.0; landmarks];
    if index < layout.dim {
        trajectory[index] = h;
    } else {
        lm[index - layout.dim] = h;
    }
    Step {
        trajectory,
        landmarks: lm,
        predicted: 0.0,
    }
}

/// Relative error of each column: |fd − c|∞ / max(|c|∞, largest column).
fn compare<const D: usize>(
    cols: &[(usize, SVector<f64, D>)],
    h: f64,
    mut residual: impl FnMut(usize, f64) -> Result<SVector<f64, D>>,
) -> Result<(f64, usize)> {
    let scale = cols.iter().map(|(_, c)| c.amax()).fold(1e-12, f64::max);
    let mut worst = 0.0f64;
    for (i, c) in cols {
        let fd = (residual(*i, h)? - residual(*i, -h)?) / (2.0 * h);
        worst = worst.max((fd - c).amax() / scale.max(c.amax()));
    }
    Ok((worst, cols.len()))
}

/// Compares every analytic Jacobian column of `samples` randomly chosen
/// reprojection and IMU residuals at `state` with central differences of
/// step `h` taken through the solver's own state update.
pub fn jacobian_check(problem: &FusionProblem, state: &FusionState, samples: usize, h: f64, seed: u64) -> Result<JacobianCheck> {
    if problem.tracks.is_empty() || problem.imu.is_empty() || state.inverse_depth.len() != problem.tracks.len() {
        return Err(Error::InvalidInput("state does not match the problem".into()));
    }
    let layout = Layout::new(&state.trajectory, &problem.gravity, problem.estimate_biases);
    let nl = problem.tracks.len();
    let traj = &state.trajectory;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = JacobianCheck::default();
    let step = |i: usize, h: f64| apply(&layout, state, &unit_step(&layout, nl, i, h));
    for _ in 0..samples {
        let k = rng.random_range(0..nl);
        let track = &problem.tracks[k];
        let m = rng.random_range(0..track.observations.len());
        let o = &track.observations[m];
        let reference = pose_eval(traj, track.reference_time)?;
        let observer = pose_eval(traj, o.t)?;
        let rho = state.inverse_depth[k];
        if let Some(b) = reprojection_block(problem, &layout, &reference, &observer, &track.ray, rho, &o.observation.pixel, layout.dim + k) {
            let (e, n) = compare(&b.cols, h, |i, h| {
                let s = step(i, h);
                track_reprojections(problem, &s, track, s.inverse_depth[k])?[m]
                    .ok_or_else(|| Error::Degenerate("point crossed behind the camera".into()))
            })?;
            out.reprojection = out.reprojection.max(e);
            out.columns += n;
        }
        let sample = problem.imu[rng.random_range(0..problem.imu.len())];
        let pose = pose_eval(traj, sample.t)?;
        let gb = gyro_block(&layout, &pose, &sample, &state.biases.gyro);
        let ab = accel_block(&layout, traj, &pose, &sample, &state.biases.accel, &problem.gravity)?;
        let imu_at = |i: usize, h: f64| imu_residuals(&step(i, h), &sample, &problem.gravity);
        let (e, n) = compare(&gb.cols, h, |i, h| Ok(imu_at(i, h)?.0))?;
        out.gyro = out.gyro.max(e);
        out.columns += n;
        let (e, n) = compare::<3>(&ab.cols, h, |i, h| Ok::<Vector3<f64>, Error>(imu_at(i, h)?.1))?;
        out.accel = out.accel.max(e);
        out.columns += n;
    }
    Ok(out)
}
