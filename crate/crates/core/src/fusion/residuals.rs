use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use super::layout::{Block, Layout};
use super::{FusionProblem, FusionState, Track};
use crate::bspline::{basis, basis_d2, RotationJacobians, Trajectory};
use crate::error::Result;
use crate::lie::hat;
use crate::sensors::{huber_of_norm, ImuSample};

/// Pose at a timestamp with the data needed for control-point Jacobians.
pub(crate) struct PoseEval {
    pub rot: RotationJacobians,
    pub position: Vector3<f64>,
    pub pos_first: usize,
    pub pos_weights: [f64; 4],
}

pub(crate) fn pose_eval(traj: &Trajectory, t: f64) -> Result<PoseEval> {
    let rot = traj.rotation.eval_with_jacobians(t)?;
    let seg = traj.position.locate(t)?;
    let w = basis(seg.u);
    let cps = traj.position.control_points();
    let position = (0..4).map(|j| cps[seg.first + j] * w[j]).sum();
    Ok(PoseEval {
        rot,
        position,
        pos_first: seg.first,
        pos_weights: w,
    })
}

/// Cheirality threshold on the homogeneous depth.
const MIN_DEPTH: f64 = 1e-9;

/// Reprojection of a track's reference ray into an observing pose, with the
/// Jacobian columns for both poses and the inverse depth (column
/// `landmark_col`). `None` when the point falls behind the camera.
pub(crate) fn reprojection_block(
    problem: &FusionProblem,
    layout: &Layout,
    reference: &PoseEval,
    observer: &PoseEval,
    ray: &Vector3<f64>,
    rho: f64,
    measured: &Vector2<f64>,
    landmark_col: usize,
) -> Option<Block<2>> {
    let r_o_t = observer.rot.rotation.transpose();
    let bearing = reference.rot.rotation * ray;
    let baseline = reference.position - observer.position;
    let w = bearing + baseline * rho;
    let y = r_o_t * w;
    if !(y.z > MIN_DEPTH) {
        return None;
    }
    let (px, jp) = problem.camera.project_with_jacobian(&y).ok()?;
    let neg = -jp;
    let mut cols = Vec::with_capacity(49);
    let d_ref: Matrix2x3<f64> = neg * (-r_o_t * hat(&bearing));
    let d_obs: Matrix2x3<f64> = neg * (r_o_t * hat(&w));
    for k in 0..4 {
        layout.push_rotation(&mut cols, reference.rot.first + k, &(d_ref * reference.rot.d_rotation[k]));
        layout.push_rotation(&mut cols, observer.rot.first + k, &(d_obs * observer.rot.d_rotation[k]));
    }
    let d_pos: Matrix2x3<f64> = neg * r_o_t * rho;
    for k in 0..4 {
        layout.push_position(&mut cols, reference.pos_first + k, &(d_pos * reference.pos_weights[k]));
        layout.push_position(&mut cols, observer.pos_first + k, &(d_pos * -observer.pos_weights[k]));
    }
    cols.push((landmark_col, neg * (r_o_t * baseline)));
    let mut block = Block {
        residual: measured - px,
        cols,
    };
    block.compact();
    Some(block)
}

pub(crate) fn gyro_block(layout: &Layout, pose: &PoseEval, sample: &ImuSample, bias: &Vector3<f64>) -> Block<3> {
    let mut cols = Vec::with_capacity(15);
    for k in 0..4 {
        layout.push_rotation(&mut cols, pose.rot.first + k, &(-pose.rot.d_omega[k]));
    }
    if let Some(o) = layout.bias {
        push_identity(&mut cols, o, -1.0);
    }
    Block {
        residual: sample.omega - (pose.rot.omega + bias),
        cols,
    }
}

pub(crate) fn accel_block(
    layout: &Layout,
    traj: &Trajectory,
    pose: &PoseEval,
    sample: &ImuSample,
    bias: &Vector3<f64>,
    gravity: &Vector3<f64>,
) -> Result<Block<3>> {
    let seg = traj.position.locate(sample.t)?;
    let dt = traj.position.knot_spacing();
    let w2 = basis_d2(seg.u).map(|v| v / (dt * dt));
    let cps = traj.position.control_points();
    let acc: Vector3<f64> = (0..4).map(|j| cps[seg.first + j] * w2[j]).sum();
    let v = acc - gravity;
    let rt = pose.rot.rotation.transpose();
    let mut cols = Vec::with_capacity(30);
    let d_rot: Matrix3<f64> = -(rt * hat(&v));
    for k in 0..4 {
        layout.push_rotation(&mut cols, pose.rot.first + k, &(d_rot * pose.rot.d_rotation[k]));
        layout.push_position(&mut cols, seg.first + k, &(rt * -w2[k]));
    }
    if let Some(o) = layout.bias {
        push_identity(&mut cols, o + 3, -1.0);
    }
    Ok(Block {
        residual: sample.accel - (rt * v + bias),
        cols,
    })
}

fn push_identity(cols: &mut Vec<(usize, Vector3<f64>)>, offset: usize, s: f64) {
    for a in 0..3 {
        let mut c = Vector3::zeros();
        c[a] = s;
        cols.push((offset + a, c));
    }
}

/// Cost-only evaluation, split by modality.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CostTerms {
    pub reprojection: f64,
    pub gyro: f64,
    pub accel: f64,
    pub invalid: usize,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.reprojection + self.gyro + self.accel
    }
}

/// Cost charged to an observation whose landmark is behind the camera: the
/// Huber cost of a residual as long as the image diagonal.
pub(crate) fn cheirality_penalty(problem: &FusionProblem) -> f64 {
    let diag = (problem.camera.width as f64).hypot(problem.camera.height as f64);
    huber_of_norm(diag, problem.huber_c)
}

pub(crate) fn track_reprojections(
    problem: &FusionProblem,
    state: &FusionState,
    track: &Track,
    rho: f64,
) -> Result<Vec<Option<Vector2<f64>>>> {
    let traj = &state.trajectory;
    let rr = traj.rotation.eval(track.reference_time)?;
    let pr = traj.position.eval(track.reference_time, 0)?;
    let bearing = rr * track.ray;
    track
        .observations
        .iter()
        .map(|o| {
            let ro = traj.rotation.eval(o.t)?;
            let po = traj.position.eval(o.t, 0)?;
            let y = ro.transpose() * (bearing + (pr - po) * rho);
            if !(y.z > MIN_DEPTH) {
                return Ok(None);
            }
            Ok(problem.camera.project(&y).ok().map(|px| o.observation.pixel - px))
        })
        .collect()
}

pub(crate) fn imu_residuals(
    state: &FusionState,
    sample: &ImuSample,
    gravity: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let traj = &state.trajectory;
    let omega = traj.rotation.angular_velocity(sample.t)?;
    let r = traj.rotation.eval(sample.t)?;
    let acc = traj.position.eval(sample.t, 2)?;
    Ok((
        sample.omega - (omega + state.biases.gyro),
        sample.accel - (r.transpose() * (acc - gravity) + state.biases.accel),
    ))
}

pub(crate) fn evaluate_cost(problem: &FusionProblem, state: &FusionState) -> Result<CostTerms> {
    let mut c = CostTerms::default();
    let penalty = cheirality_penalty(problem);
    for (k, track) in problem.tracks.iter().enumerate() {
        for r in track_reprojections(problem, state, track, state.inverse_depth[k])? {
            match r {
                Some(r) => c.reprojection += huber_of_norm(r.norm(), problem.huber_c),
                None => {
                    c.reprojection += penalty;
                    c.invalid += 1;
                }
            }
        }
    }
    for s in &problem.imu {
        let (rg, ra) = imu_residuals(state, s, &problem.gravity)?;
        c.gyro += problem.gamma_gyro * rg.norm_squared();
        c.accel += problem.gamma_accel * ra.norm_squared();
    }
    Ok(c)
}

/// Adds `w · JᵀJ` and `w · Jᵀr` of a block to the trajectory system and to
/// the landmark accumulators.
pub(crate) fn accumulate<const D: usize>(
    block: &Block<D>,
    weight: f64,
    dim: usize,
    h: &mut crate::linalg::SymmetricMatrix,
    g: &mut [f64],
    landmark: Option<&mut LandmarkAccumulator>,
) {
    // landmark columns sort after every trajectory column
    let mut lm = landmark;
    for (a, (i, ci)) in block.cols.iter().enumerate() {
        let gi = weight * ci.dot(&block.residual);
        if *i >= dim {
            if let Some(acc) = lm.as_deref_mut() {
                acc.g += gi;
                acc.h += weight * ci.norm_squared();
                for (j, cj) in &block.cols[..a] {
                    acc.add_cross(*j, weight * ci.dot(cj));
                }
            }
            continue;
        }
        g[*i] += gi;
        for (j, cj) in &block.cols[..=a] {
            h.add(*i, *j, weight * ci.dot(cj));
        }
    }
}

/// Normal-equation pieces of a single inverse depth.
#[derive(Debug, Clone, Default)]
pub(crate) struct LandmarkAccumulator {
    pub h: f64,
    pub g: f64,
    /// Sparse coupling to trajectory parameters, unsorted until `finish`.
    pub cross: Vec<(usize, f64)>,
}

impl LandmarkAccumulator {
    fn add_cross(&mut self, j: usize, v: f64) {
        self.cross.push((j, v));
    }

    pub fn finish(&mut self) {
        self.cross.sort_unstable_by_key(|c| c.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.cross.len());
        for (j, v) in self.cross.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => out.push((j, v)),
            }
        }
        self.cross = out;
    }
}
