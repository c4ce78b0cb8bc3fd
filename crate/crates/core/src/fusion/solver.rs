use log::debug;
use serde::Serialize;

use super::layout::Layout;
use super::residuals::{
    accel_block, accumulate, evaluate_cost, gyro_block, imu_residuals, pose_eval,
    reprojection_block, track_reprojections, CostTerms, LandmarkAccumulator,
};
use super::{FusionConfig, FusionProblem, FusionReport, FusionSolution, FusionState};
use crate::error::{Error, Result};
use crate::lie::exp_quat;
use crate::linalg::SymmetricMatrix;
use crate::sensors::huber_weight;

/// Lower bound on the Marquardt diagonal scaling.
const DAMPING_FLOOR: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e16;
/// Restarts after moving landmarks seen behind the camera back to infinity.
const MAX_RESEEDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    StepTolerance,
    MaxIterations,
    /// Damping grew without finding a decrease.
    Stalled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ResidualStats {
    /// Number of scalar residual components.
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub rms: f64,
}

impl ResidualStats {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return ResidualStats::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        ResidualStats {
            count: v.len(),
            mean,
            std: var.sqrt(),
            rms,
        }
    }
}

pub(crate) struct Linearization {
    pub cost: CostTerms,
    pub h: SymmetricMatrix,
    pub g: Vec<f64>,
    pub landmarks: Vec<LandmarkAccumulator>,
}

impl Linearization {
    /// Largest gradient component divided by the root of its Hessian
    /// diagonal, in residual units.
    fn max_gradient(&self) -> f64 {
        let scaled = |g: f64, h: f64| g.abs() / h.max(DAMPING_FLOOR).sqrt();
        let t = (0..self.g.len()).map(|i| scaled(self.g[i], self.h.diag(i)));
        let l = self.landmarks.iter().map(|l| scaled(l.g, l.h));
        t.chain(l).fold(0.0, f64::max)
    }
}

/// Skyline profile of the landmark-reduced normal equations.
pub(crate) fn profile(problem: &FusionProblem, layout: &Layout, state: &FusionState) -> Result<Vec<usize>> {
    let traj = &state.trajectory;
    let mut first: Vec<usize> = (0..layout.dim).collect();
    let mut touch = |set: &mut Vec<usize>| {
        if let Some(&m) = set.iter().min() {
            for &i in set.iter() {
                first[i] = first[i].min(m);
            }
        }
        set.clear();
    };
    let mut set = Vec::new();
    let segs = |t: f64, set: &mut Vec<usize>| -> Result<()> {
        set.extend(layout.indices_rotation(traj.rotation.grid().locate(t)?.first));
        set.extend(layout.indices_position(traj.position.locate(t)?.first));
        Ok(())
    };
    for track in &problem.tracks {
        segs(track.reference_time, &mut set)?;
        for o in &track.observations {
            segs(o.t, &mut set)?;
        }
        touch(&mut set);
    }
    for s in &problem.imu {
        segs(s.t, &mut set)?;
        set.extend(layout.indices_bias());
        touch(&mut set);
    }
    Ok(first)
}

pub(crate) fn linearize(
    problem: &FusionProblem,
    layout: &Layout,
    profile: &[usize],
    state: &FusionState,
) -> Result<Linearization> {
    let traj = &state.trajectory;
    let dim = layout.dim;
    let mut h = SymmetricMatrix::with_profile(profile.to_vec());
    let mut g = vec![0.0; dim];
    let mut cost = CostTerms::default();
    let penalty = super::residuals::cheirality_penalty(problem);
    let mut landmarks = Vec::with_capacity(problem.tracks.len());
    for (k, track) in problem.tracks.iter().enumerate() {
        let rho = state.inverse_depth[k];
        let reference = pose_eval(traj, track.reference_time)?;
        let mut acc = LandmarkAccumulator::default();
        for o in &track.observations {
            let observer = pose_eval(traj, o.t)?;
            let block = reprojection_block(
                problem,
                layout,
                &reference,
                &observer,
                &track.ray,
                rho,
                &o.observation.pixel,
                dim + k,
            );
            match block {
                Some(b) => {
                    let s = b.residual.norm();
                    if !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "non-finite reprojection residual for track {} frame {}",
                            track.track_id, o.observation.frame
                        )));
                    }
                    cost.reprojection += crate::sensors::huber_of_norm(s, problem.huber_c);
                    accumulate(&b, huber_weight(s, problem.huber_c), dim, &mut h, &mut g, Some(&mut acc));
                }
                None => {
                    cost.reprojection += penalty;
                    cost.invalid += 1;
                }
            }
        }
        acc.finish();
        landmarks.push(acc);
    }
    for (n, s) in problem.imu.iter().enumerate() {
        let pose = pose_eval(traj, s.t)?;
        let gb = gyro_block(layout, &pose, s, &state.biases.gyro);
        let ab = accel_block(layout, traj, &pose, s, &state.biases.accel, &problem.gravity)?;
        let (cg, ca) = (gb.residual.norm_squared(), ab.residual.norm_squared());
        if !(cg.is_finite() && ca.is_finite()) {
            return Err(Error::Solver(format!("non-finite IMU residual at sample {n} (t = {})", s.t)));
        }
        cost.gyro += problem.gamma_gyro * cg;
        cost.accel += problem.gamma_accel * ca;
        accumulate(&gb, problem.gamma_gyro, dim, &mut h, &mut g, None);
        accumulate(&ab, problem.gamma_accel, dim, &mut h, &mut g, None);
    }
    Ok(Linearization {
        cost,
        h,
        g,
        landmarks,
    })
}

pub(crate) struct Step {
    pub trajectory: Vec<f64>,
    pub landmarks: Vec<f64>,
    /// Model decrease −(2gᵀΔ + ΔᵀHΔ) of the Gauss–Newton model of the cost.
    pub predicted: f64,
}

/// Solves `(H + λD)Δ = −g` with the inverse depths eliminated.
pub(crate) fn solve(lin: &Linearization, lambda: f64) -> Option<Step> {
    let dim = lin.g.len();
    let mut m = lin.h.clone();
    let mut rhs: Vec<f64> = lin.g.iter().map(|v| -v).collect();
    let mut damp_t = vec![0.0; dim];
    for (i, d) in damp_t.iter_mut().enumerate() {
        *d = lambda * lin.h.diag(i).max(DAMPING_FLOOR);
        m.add_diag(i, *d);
    }
    let mut hll = Vec::with_capacity(lin.landmarks.len());
    for lm in &lin.landmarks {
        let d = lm.h + lambda * lm.h.max(DAMPING_FLOOR);
        hll.push(d);
        let cross = &lm.cross;
        for a in 0..cross.len() {
            let (i, va) = cross[a];
            rhs[i] += va * lm.g / d;
            for &(j, vb) in &cross[..=a] {
                m.add(i, j, -va * vb / d);
            }
        }
    }
    let chol = m.cholesky()?;
    let dt = chol.solve(&rhs);
    let dl: Vec<f64> = lin
        .landmarks
        .iter()
        .zip(&hll)
        .map(|(lm, d)| {
            let coupling: f64 = lm.cross.iter().map(|&(j, v)| v * dt[j]).sum();
            (-lm.g - coupling) / d
        })
        .collect();
    // with (H + λD)Δ = −g:  −2gᵀΔ − ΔᵀHΔ = −gᵀΔ + λΔᵀDΔ
    let mut predicted = 0.0;
    for i in 0..dim {
        predicted += -lin.g[i] * dt[i] + damp_t[i] * dt[i] * dt[i];
    }
    for ((lm, d), x) in lin.landmarks.iter().zip(&hll).zip(&dl) {
        predicted += -lm.g * x + (d - lm.h) * x * x;
    }
    Some(Step {
        trajectory: dt,
        landmarks: dl,
        predicted,
    })
}

pub(crate) fn apply(layout: &Layout, state: &FusionState, step: &Step) -> FusionState {
    let mut next = state.clone();
    let traj = &mut next.trajectory;
    for k in 0..traj.rotation.control_rotations().len() {
        if let Some(d) = layout.rotation_step(k, &step.trajectory) {
            let q = exp_quat(&d) * traj.rotation.control_rotations()[k];
            traj.rotation.set_control(k, q);
        }
    }
    for (k, cp) in traj.position.control_points_mut().iter_mut().enumerate() {
        if let Some(d) = layout.position_step(k, &step.trajectory) {
            *cp += d;
        }
    }
    if let Some(o) = layout.bias {
        let s = &step.trajectory;
        next.biases.gyro += nalgebra::Vector3::new(s[o], s[o + 1], s[o + 2]);
        next.biases.accel += nalgebra::Vector3::new(s[o + 3], s[o + 4], s[o + 5]);
    }
    for (rho, d) in next.inverse_depth.iter_mut().zip(&step.landmarks) {
        *rho += d;
    }
    next
}

/// Resets to ρ = 0 every track with an observation behind the camera whose
/// cost is lower with the landmark at infinity.
fn reseed_invalid_tracks(problem: &FusionProblem, state: &FusionState) -> Result<(FusionState, usize)> {
    let penalty = super::residuals::cheirality_penalty(problem);
    let track_cost = |res: &[Option<nalgebra::Vector2<f64>>]| -> (f64, usize) {
        res.iter().fold((0.0, 0), |(c, n), r| match r {
            Some(r) => (c + crate::sensors::huber_of_norm(r.norm(), problem.huber_c), n),
            None => (c + penalty, n + 1),
        })
    };
    let mut next = state.clone();
    let mut count = 0;
    for (k, track) in problem.tracks.iter().enumerate() {
        let (now, invalid) = track_cost(&track_reprojections(problem, state, track, state.inverse_depth[k])?);
        if invalid == 0 {
            continue;
        }
        let (at_infinity, _) = track_cost(&track_reprojections(problem, state, track, 0.0)?);
        if at_infinity < now {
            next.inverse_depth[k] = 0.0;
            count += 1;
        }
    }
    Ok((next, count))
}

fn step_norm(step: &Step) -> f64 {
    step.trajectory
        .iter()
        .chain(&step.landmarks)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn state_norm(state: &FusionState) -> f64 {
    let t = &state.trajectory;
    let p: f64 = t.position.control_points().iter().map(|c| c.norm_squared()).sum();
    let r: f64 = state.inverse_depth.iter().map(|v| v * v).sum();
    (p + r + t.rotation.control_rotations().len() as f64).sqrt()
}

/// Levenberg–Marquardt with Nielsen's damping update and Marquardt diagonal
/// scaling. Only steps that lower the cost are accepted. When biases are
/// estimated the problem is first solved with the biases held at their
/// initial values, then again with them free.
pub fn optimize(problem: &FusionProblem, config: &FusionConfig) -> Result<FusionSolution> {
    let mut state = problem.initial.clone();
    let initial = evaluate_cost(problem, &state)?;
    let initial_cost = initial.total();
    let stages: &[bool] = match (problem.estimate_biases, config.bias_warmup) {
        (true, true) => &[false, true],
        (estimate, _) => if estimate { &[true] } else { &[false] },
    };
    let mut history = vec![initial_cost];
    let mut iterations = 0;
    let mut outcome = None;
    for &biases in stages {
        let layout = Layout::new(&state.trajectory, &problem.gravity, biases);
        let profile = profile(problem, &layout, &state)?;
        let run = levenberg_marquardt(problem, config, &layout, &profile, state, &mut history)?;
        iterations += run.iterations;
        state = run.state;
        outcome = Some((run.termination, run.cost));
    }
    let (termination, final_terms) = outcome.expect("at least one stage");
    let report = report(problem, &state, initial_cost, final_terms, iterations, termination, history)?;
    Ok(FusionSolution {
        landmarks: problem.landmarks(&state),
        state,
        report,
    })
}

struct Run {
    state: FusionState,
    cost: CostTerms,
    iterations: usize,
    termination: Termination,
}

fn levenberg_marquardt(
    problem: &FusionProblem,
    config: &FusionConfig,
    layout: &Layout,
    profile: &[usize],
    mut state: FusionState,
    history: &mut Vec<f64>,
) -> Result<Run> {
    let mut lin = linearize(problem, layout, profile, &state)?;
    if !lin.cost.total().is_finite() {
        return Err(Error::Solver("initial cost is not finite".into()));
    }
    let mut lambda = config.initial_damping;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut reseeds = 0;
    let mut converged = None;
    let termination = loop {
        let stop = if let Some(reason) = converged.take() {
            Some(reason)
        } else if lin.max_gradient() < config.gradient_tolerance {
            Some(Termination::GradientTolerance)
        } else if iterations >= config.max_iterations {
            Some(Termination::MaxIterations)
        } else if lambda > MAX_DAMPING {
            Some(Termination::Stalled)
        } else {
            None
        };
        let step = match stop {
            None => solve(&lin, lambda),
            Some(_) => None,
        };
        let stop = stop.or_else(|| {
            step.as_ref()
                .filter(|s| step_norm(s) <= 1e-12 * (state_norm(&state) + 1e-12))
                .map(|_| Termination::StepTolerance)
        });
        if let Some(reason) = stop {
            if lin.cost.invalid == 0 || reseeds >= MAX_RESEEDS || reason == Termination::MaxIterations {
                break reason;
            }
            reseeds += 1;
            let (next, n) = reseed_invalid_tracks(problem, &state)?;
            if n == 0 {
                break reason;
            }
            debug!("moved {n} landmarks behind the camera back to infinity");
            state = next;
            lin = linearize(problem, layout, profile, &state)?;
            history.push(lin.cost.total());
            lambda = config.initial_damping;
            nu = 2.0;
            continue;
        }
        iterations += 1;
        let Some(step) = step else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let candidate = apply(layout, &state, &step);
        let cost = lin.cost.total();
        let new_cost = evaluate_cost(problem, &candidate)?.total();
        let gain = (cost - new_cost) / step.predicted.max(f64::MIN_POSITIVE);
        debug!("iter {iterations}: cost {cost:.6e} -> {new_cost:.6e}, lambda {lambda:.2e}, gain {gain:.3}");
        if new_cost.is_finite() && new_cost < cost {
            state = candidate;
            lambda *= (1.0 / 3.0f64).max(1.0 - (2.0 * gain.min(1.0) - 1.0).powi(3));
            lambda = lambda.max(1e-12);
            nu = 2.0;
            history.push(new_cost);
            lin = linearize(problem, layout, profile, &state)?;
            if (cost - new_cost) / cost.max(f64::MIN_POSITIVE) < config.cost_tolerance {
                converged = Some(Termination::CostTolerance);
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
    };
    Ok(Run {
        state,
        cost: lin.cost,
        iterations,
        termination,
    })
}

fn report(
    problem: &FusionProblem,
    state: &FusionState,
    initial_cost: f64,
    terms: CostTerms,
    iterations: usize,
    termination: Termination,
    cost_history: Vec<f64>,
) -> Result<FusionReport> {
    let mut pix = Vec::new();
    for (k, track) in problem.tracks.iter().enumerate() {
        for r in track_reprojections(problem, state, track, state.inverse_depth[k])?.into_iter().flatten() {
            pix.extend([r.x, r.y]);
        }
    }
    let (sg, sa) = (problem.gamma_gyro.sqrt(), problem.gamma_accel.sqrt());
    let mut gyro = Vec::with_capacity(3 * problem.imu.len());
    let mut accel = Vec::with_capacity(3 * problem.imu.len());
    for s in &problem.imu {
        let (rg, ra) = imu_residuals(state, s, &problem.gravity)?;
        gyro.extend((rg * sg).iter().copied());
        accel.extend((ra * sa).iter().copied());
    }
    Ok(FusionReport {
        initial_cost,
        final_cost: terms.total(),
        iterations,
        termination,
        reprojection: ResidualStats::from_values(pix),
        gyro: ResidualStats::from_values(gyro),
        accel: ResidualStats::from_values(accel),
        invalid_observations: terms.invalid,
        cost_history,
    })
}
