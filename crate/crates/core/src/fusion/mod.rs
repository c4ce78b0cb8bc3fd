//! Visual-inertial batch fusion on a split ℝ³ × SO(3) spline trajectory.
//!
//! The cost is
//!
//! ```text
//! J = Σ_{k,m} φ(x_km − π(x_k0, T(t_km) T(t_k0)⁻¹, ρ_k))
//!   + Σ_n γ_g ‖ω_n − ω̂(t_n)‖² + Σ_l γ_a ‖a_l − â(t_l)‖²
//! ```
//!
//! with φ the Huber norm and γ the spline-error weights from [`crate::sew`].
//! It is minimized by Levenberg–Marquardt with the inverse depths eliminated
//! through the Schur complement.
//!
//! Gauge: the first position control point is held fixed, and the first
//! rotation control point may only tilt (its rotation about gravity is held
//! fixed). Roll and pitch are observable through gravity, scale through the
//! accelerometer.

mod diagnostics;
mod layout;
mod metrics;
mod residuals;
mod solver;

pub use diagnostics::{jacobian_check, JacobianCheck};
pub use metrics::{
    align_yaw_translation, endpoint_distortion, endpoint_error, path_length, position_rms,
    scale_error,
};
pub use solver::{optimize, ResidualStats, Termination};

use log::warn;
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::bspline::{KnotGrid, SplineR3, SplineSO3, Trajectory};
use crate::error::{Error, Result};
use crate::sensors::{
    backproject_ray, predict_accel, predict_gyro, CameraModel, ImuBiases,
    ImuLog, ImuSample, Landmark, Observation, TrackSet,
};
use crate::sew::{
    predict_residual_variance, weights_from_quality, FrequencyResponseModel, ImuResponseModels,
    ResidualWeightPlan, WeightRequest,
};
use crate::spectral::{vector_spectrum, Energy};

/// How the IMU residuals are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// γ = 1/σ̂_r², the predicted spline residual variance.
    #[default]
    SplineError,
    /// γ = 1/σ_n², measurement noise only.
    InverseNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub q_gyro: f64,
    pub q_accel: f64,
    /// Gyroscope noise std, rad/s.
    pub sigma_gyro: f64,
    /// Accelerometer noise std, m/s².
    pub sigma_accel: f64,
    /// Huber cut-off, pixels.
    pub huber_c: f64,
    pub dt_max: f64,
    /// Per solver stage.
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    /// Stop when every gradient component, divided by the root of its
    /// Hessian diagonal, is below this.
    pub gradient_tolerance: f64,
    pub gravity: [f64; 3],
    /// Multiplies both IMU weights.
    pub weight_scale_factor: f64,
    pub estimate_biases: bool,
    /// Solve once with the biases held fixed before estimating them.
    pub bias_warmup: bool,
    pub weighting: Weighting,
    /// Fixed (rotation, position) knot spacings, bypassing the quality search.
    pub knot_spacing: Option<[f64; 2]>,
    pub gyro_response_order: u32,
    pub accel_response_order: u32,
    pub initial_damping: f64,
    /// Largest tolerated IMU gap, in knot intervals.
    pub max_imu_gap_knots: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let models = ImuResponseModels::default();
        FusionConfig {
            q_gyro: 0.99,
            q_accel: 0.97,
            sigma_gyro: 0.005,
            sigma_accel: 0.05,
            huber_c: 2.0,
            dt_max: 0.5,
            max_iterations: 100,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            gravity: [0.0, 0.0, -crate::sensors::STANDARD_GRAVITY],
            weight_scale_factor: 1.0,
            estimate_biases: true,
            bias_warmup: true,
            weighting: Weighting::SplineError,
            knot_spacing: None,
            gyro_response_order: models.gyro.spline_order,
            accel_response_order: models.accel.spline_order,
            initial_damping: 1e-4,
            max_imu_gap_knots: 5.0,
        }
    }
}

impl FusionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: FusionConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("fusion config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        for q in [self.q_gyro, self.q_accel] {
            if !(q > 0.0 && q <= 1.0) {
                return bad("quality values must be in (0, 1]");
            }
        }
        if !(self.cost_tolerance > 0.0 && self.gradient_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.huber_c > 0.0 && self.dt_max > 0.0 && self.weight_scale_factor > 0.0) {
            return bad("huber_c, dt_max and weight_scale_factor must be positive");
        }
        if !(self.sigma_gyro >= 0.0 && self.sigma_accel >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        if let Some([a, b]) = self.knot_spacing {
            if !(a > 0.0 && b > 0.0) {
                return bad("knot spacings must be positive");
            }
        }
        Ok(())
    }

    pub fn response_models(&self) -> ImuResponseModels {
        ImuResponseModels {
            gyro: FrequencyResponseModel::new(self.gyro_response_order),
            accel: FrequencyResponseModel::new(self.accel_response_order),
        }
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }
}

/// Knot spacings and weights for an IMU log. A fixed knot spacing in the
/// config replaces the quality search; the predictions are then evaluated
/// at the fixed spacings.
pub fn plan_weights(imu: &ImuLog, config: &FusionConfig) -> Result<ResidualWeightPlan> {
    let rate = imu
        .sample_rate()
        .ok_or_else(|| Error::InvalidInput("IMU log needs at least two samples".into()))?;
    let gyro_spec = vector_spectrum(&imu.gyro(), rate)?;
    let accel_spec = vector_spectrum(&imu.accel(), rate)?;
    let models = config.response_models();
    let req = WeightRequest {
        q_gyro: config.q_gyro,
        q_accel: config.q_accel,
        sigma_gyro: config.sigma_gyro,
        sigma_accel: config.sigma_accel,
        dt_max: config.dt_max,
        models,
    };
    let mut plan = weights_from_quality(&gyro_spec, &accel_spec, &req)?;
    if let Some([dt_so3, dt_r3]) = config.knot_spacing {
        plan.dt_so3 = dt_so3;
        plan.dt_r3 = dt_r3;
        plan.gyro = predict_residual_variance(&gyro_spec, dt_so3, config.sigma_gyro, &models.gyro)?;
        plan.accel = predict_residual_variance(&accel_spec, dt_r3, config.sigma_accel, &models.accel)?;
        plan.warnings.clear();
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedObservation {
    pub observation: Observation,
    /// Rolling-shutter capture time.
    pub t: f64,
}

/// A landmark track: reference observation plus the later observations that
/// produce residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub reference: Observation,
    pub reference_time: f64,
    /// Unit ray of the reference observation, camera frame.
    pub ray: Vector3<f64>,
    pub observations: Vec<TimedObservation>,
}

/// Estimated quantities.
#[derive(Debug, Clone)]
pub struct FusionState {
    pub trajectory: Trajectory,
    /// Per track, same order as [`FusionProblem::tracks`].
    pub inverse_depth: Vec<f64>,
    pub biases: ImuBiases,
}

#[derive(Debug, Clone)]
pub struct FusionProblem {
    pub camera: CameraModel,
    pub tracks: Vec<Track>,
    pub imu: Vec<ImuSample>,
    pub imu_rate: f64,
    pub gravity: Vector3<f64>,
    pub gamma_gyro: f64,
    pub gamma_accel: f64,
    pub huber_c: f64,
    pub estimate_biases: bool,
    pub plan: ResidualWeightPlan,
    /// Starting point of the optimization.
    pub initial: FusionState,
}

impl FusionProblem {
    pub fn landmarks(&self, state: &FusionState) -> Vec<Landmark> {
        self.tracks
            .iter()
            .zip(&state.inverse_depth)
            .map(|(t, &rho)| Landmark {
                track_id: t.track_id,
                reference: t.reference,
                inverse_depth: rho,
            })
            .collect()
    }

    pub fn residual_count(&self) -> usize {
        self.tracks.iter().map(|t| t.observations.len()).sum::<usize>() + 2 * self.imu.len()
    }

    /// Replaces the starting point, e.g. with ground truth.
    pub fn with_initial(mut self, state: FusionState) -> Result<Self> {
        if state.inverse_depth.len() != self.tracks.len() {
            return Err(Error::InvalidInput("one inverse depth per track required".into()));
        }
        let (a, b) = (state.trajectory.valid_start(), state.trajectory.valid_end());
        let (need_a, need_b) = self.time_span();
        if a > need_a + 1e-9 || b < need_b - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "trajectory valid on [{a}, {b}] but measurements span [{need_a}, {need_b}]"
            )));
        }
        self.initial = state;
        Ok(self)
    }

    /// First and last measurement time.
    pub fn time_span(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let times = self.imu.iter().map(|s| s.t).chain(
            self.tracks
                .iter()
                .flat_map(|t| std::iter::once(t.reference_time).chain(t.observations.iter().map(|o| o.t))),
        );
        for t in times {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        (lo, hi)
    }
}

/// Assembles the cost: tracks with at least two observations become
/// inverse-depth landmarks, both splines cover every measurement time, and
/// the state starts at identity rotation, zero position, zero biases and
/// landmarks at infinity.
pub fn build_problem(
    tracks: &TrackSet,
    imu: &ImuLog,
    camera: &CameraModel,
    plan: &ResidualWeightPlan,
    config: &FusionConfig,
) -> Result<FusionProblem> {
    config.validate()?;
    camera.validate()?;
    if imu.len() < 2 {
        return Err(Error::Build("IMU log needs at least two samples".into()));
    }
    let mut out_tracks = Vec::new();
    let mut short = 0usize;
    for obs in tracks.tracks() {
        if obs.len() < 2 {
            short += 1;
            continue;
        }
        let reference = obs[0];
        let reference_time = reference.time(camera)?;
        let ray = backproject_ray(&reference.pixel, camera);
        let observations = obs[1..]
            .iter()
            .map(|o| {
                Ok(TimedObservation {
                    observation: *o,
                    t: o.time(camera)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out_tracks.push(Track {
            track_id: reference.track_id,
            reference,
            reference_time,
            ray,
            observations,
        });
    }
    if short > 0 {
        warn!("{short} tracks with a single observation ignored");
    }
    if out_tracks.is_empty() {
        return Err(Error::Build("no track has two or more observations".into()));
    }

    let imu_rate = imu.sample_rate().expect("two samples");
    let gap_limit = config.max_imu_gap_knots * plan.dt_so3.min(plan.dt_r3);
    for w in imu.samples.windows(2) {
        if w[1].t - w[0].t > gap_limit {
            return Err(Error::Build(format!(
                "IMU gap of {:.4} s at t = {:.4} exceeds {} knot intervals",
                w[1].t - w[0].t,
                w[0].t,
                config.max_imu_gap_knots
            )));
        }
    }
    let (gamma_gyro, gamma_accel) = match config.weighting {
        Weighting::SplineError => (plan.gyro.gamma, plan.accel.gamma),
        Weighting::InverseNoise => {
            if !(config.sigma_gyro > 0.0 && config.sigma_accel > 0.0) {
                return Err(Error::DegenerateWeight);
            }
            (config.sigma_gyro.powi(-2), config.sigma_accel.powi(-2))
        }
    };

    let mut problem = FusionProblem {
        camera: *camera,
        tracks: out_tracks,
        imu: imu.samples.clone(),
        imu_rate,
        gravity: config.gravity(),
        gamma_gyro: gamma_gyro * config.weight_scale_factor,
        gamma_accel: gamma_accel * config.weight_scale_factor,
        huber_c: config.huber_c,
        estimate_biases: config.estimate_biases,
        plan: plan.clone(),
        initial: FusionState {
            trajectory: placeholder_trajectory()?,
            inverse_depth: Vec::new(),
            biases: ImuBiases::default(),
        },
    };
    let (first, last) = problem.time_span();
    let (imu_first, imu_last) = (imu.samples[0].t, imu.samples[imu.len() - 1].t);
    if imu_first - first > gap_limit || last - imu_last > gap_limit {
        return Err(Error::Build(format!(
            "IMU covers [{imu_first}, {imu_last}] but observations span [{first}, {last}]"
        )));
    }
    let rg = KnotGrid::covering(first, last, plan.dt_so3)?;
    let pg = KnotGrid::covering(first, last, plan.dt_r3)?;
    problem.initial = FusionState {
        trajectory: Trajectory::new(SplineSO3::identity(rg), SplineR3::constant(pg, Vector3::zeros()))?,
        inverse_depth: vec![0.0; problem.tracks.len()],
        biases: ImuBiases::default(),
    };
    Ok(problem)
}

fn placeholder_trajectory() -> Result<Trajectory> {
    let g = KnotGrid::new(0.0, 1.0, 4)?;
    Trajectory::new(SplineSO3::identity(g), SplineR3::constant(g, Vector3::zeros()))
}

/// Optimization outcome.
#[derive(Debug, Clone, Serialize)]
pub struct FusionReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub reprojection: ResidualStats,
    /// Weighted gyro residuals √γ_g·r.
    pub gyro: ResidualStats,
    /// Weighted accelerometer residuals √γ_a·r.
    pub accel: ResidualStats,
    pub invalid_observations: usize,
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FusionSolution {
    pub state: FusionState,
    pub landmarks: Vec<Landmark>,
    pub report: FusionReport,
}

impl FusionSolution {
    pub fn trajectory(&self) -> &Trajectory {
        &self.state.trajectory
    }

    pub fn biases(&self) -> &ImuBiases {
        &self.state.biases
    }
}

/// Everything produced by [`fuse`].
#[derive(Debug, Clone)]
pub struct FusionRun {
    pub plan: ResidualWeightPlan,
    pub problem: FusionProblem,
    pub solution: FusionSolution,
}

/// Weight planning, problem assembly and optimization in one call.
pub fn fuse(tracks: &TrackSet, imu: &ImuLog, camera: &CameraModel, config: &FusionConfig) -> Result<FusionRun> {
    let plan = plan_weights(imu, config)?;
    for w in &plan.warnings {
        warn!("{w}");
    }
    let problem = build_problem(tracks, imu, camera, &plan, config)?;
    let solution = optimize(&problem, config)?;
    Ok(FusionRun {
        plan,
        problem,
        solution,
    })
}

/// Fraction of the measured IMU spectral energy reproduced by the
/// estimate's predicted measurements: `(q_gyro, q_accel)`.
pub fn achieved_quality(imu: &[ImuSample], imu_rate: f64, state: &FusionState, gravity: &Vector3<f64>) -> Result<(f64, f64)> {
    let mut pg = Vec::with_capacity(imu.len());
    let mut pa = Vec::with_capacity(imu.len());
    for s in imu {
        pg.push(predict_gyro(&state.trajectory, s.t, &state.biases)?);
        pa.push(predict_accel(&state.trajectory, s.t, &state.biases, gravity)?);
    }
    let mg: Vec<Vector3<f64>> = imu.iter().map(|s| s.omega).collect();
    let ma: Vec<Vector3<f64>> = imu.iter().map(|s| s.accel).collect();
    let q = |pred: &[Vector3<f64>], meas: &[Vector3<f64>]| -> Result<f64> {
        let e_meas = vector_spectrum(meas, imu_rate)?.energy();
        if !(e_meas > 0.0) {
            return Err(Error::Degenerate("measured IMU spectrum has no energy".into()));
        }
        Ok(vector_spectrum(pred, imu_rate)?.energy() / e_meas)
    };
    Ok((q(&pg, &mg)?, q(&pa, &ma)?))
}

/// Pixel residuals of every non-reference observation, track by track.
pub fn reprojection_residuals(problem: &FusionProblem, state: &FusionState) -> Result<Vec<Option<Vector2<f64>>>> {
    let mut out = Vec::new();
    for (k, track) in problem.tracks.iter().enumerate() {
        out.extend(residuals::track_reprojections(problem, state, track, state.inverse_depth[k])?);
    }
    Ok(out)
}

/// Gyro and accelerometer residuals (measurement minus prediction), unweighted.
pub fn imu_residuals(problem: &FusionProblem, state: &FusionState) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    problem
        .imu
        .iter()
        .map(|s| residuals::imu_residuals(state, s, &problem.gravity))
        .collect()
}

/// Total cost of a state.
pub fn total_cost(problem: &FusionProblem, state: &FusionState) -> Result<f64> {
    Ok(residuals::evaluate_cost(problem, state)?.total())
}

#[cfg(test)]
mod tests;
