//! Synthetic experiments behind `sew experiment`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{fit_least_squares_1d, Trajectory};
use crate::error::{Error, Result};
use crate::fusion::{
    achieved_quality, endpoint_distortion, endpoint_error, fuse, path_length, scale_error,
    FusionConfig,
};
use crate::sew::{predict_residual_variance, FrequencyResponseModel};
use crate::simulate::{
    apply_dropout, generate_test_signal, sequence_end, simulate, white_noise, Band,
    ScenarioConfig, SyntheticData,
};
use crate::spectral::{ScalarSpectrum, UniformSignal};

/// Knot-spacing sweep of a least-squares spline fit to a noisy test signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2Config {
    pub seed: u64,
    pub duration: f64,
    pub sample_rate: f64,
    pub sigma_n: f64,
    pub bands: Vec<Band>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub points: usize,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Fig2Config {
            seed: 0,
            duration: 10.0,
            sample_rate: 500.0,
            sigma_n: 0.1,
            bands: vec![
                Band::new(0.05, 0.5, 1.0),
                Band::new(0.5, 2.0, 0.2),
                Band::new(2.0, 5.0, 0.03),
            ],
            dt_min: 0.02,
            dt_max: 1.0,
            points: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub dt: f64,
    pub sigma_r_empirical: f64,
    pub sigma_r_predicted: f64,
    pub sigma_n: f64,
    pub sigma_r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Summary {
    /// Spacing minimizing σ_r0.
    pub optimal_dt: f64,
    pub interior_minimum: bool,
    /// max |σ̂_r − σ_r| / σ_r over spacings at or above the optimum.
    pub max_relative_error_above_optimum: f64,
    /// σ_r / σ_n at the largest spacing.
    pub noise_underestimate_at_max_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Result {
    pub rows: Vec<Fig2Row>,
    pub summary: Fig2Summary,
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x * x;
        n += 1;
    }
    (s / n.max(1) as f64).sqrt()
}

pub fn run_fig2(config: &Fig2Config) -> Result<Fig2Result> {
    if !(config.points >= 3 && config.dt_min > 0.0 && config.dt_max > config.dt_min) {
        return Err(Error::InvalidInput("fig2 needs at least 3 points over 0 < dt_min < dt_max".into()));
    }
    let clean = generate_test_signal(config.seed, config.duration, config.sample_rate, &config.bands)?;
    let noise = white_noise(config.seed, clean.len(), config.sigma_n)?;
    let noisy: Vec<f64> = clean.samples().iter().zip(&noise).map(|(x, n)| x + n).collect();
    let signal = UniformSignal::new(noisy, config.sample_rate, 0.0)?;
    let spectrum = ScalarSpectrum::from_signal(&signal);
    let model = FrequencyResponseModel::cubic();
    let rows = log_space(config.dt_min, config.dt_max, config.points)
        .into_iter()
        .map(|dt| {
            let fit = fit_least_squares_1d(&signal, dt)?;
            let sigma_r0 = rms(clean.samples().iter().zip(signal.samples()).zip(&fit.residuals).map(|((x0, x), r)| x0 - (x - r)));
            let pred = predict_residual_variance(&spectrum, dt, config.sigma_n, &model)?;
            Ok(Fig2Row {
                dt,
                sigma_r_empirical: rms(fit.residuals.iter().copied()),
                sigma_r_predicted: pred.sigma_r(),
                sigma_n: config.sigma_n,
                sigma_r0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.sigma_r0.total_cmp(&b.1.sigma_r0))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let summary = Fig2Summary {
        optimal_dt: rows[best].dt,
        interior_minimum: best > 0 && best + 1 < rows.len(),
        max_relative_error_above_optimum: rows[best..]
            .iter()
            .map(|r| (r.sigma_r_predicted - r.sigma_r_empirical).abs() / r.sigma_r_empirical)
            .fold(0.0, f64::max),
        noise_underestimate_at_max_dt: rows.last().map(|r| r.sigma_r_empirical / r.sigma_n).unwrap_or(0.0),
    };
    Ok(Fig2Result { rows, summary })
}

/// Scenario plus fusion settings shared by the trajectory experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub fusion: FusionConfig,
    /// Seeds of the quality experiment.
    pub seeds: Vec<u64>,
    pub qualities: Vec<f64>,
    pub weight_factors: Vec<f64>,
    /// Dropout lengths, seconds.
    pub dropouts: Vec<f64>,
    pub fig2: Fig2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            fusion: FusionConfig::default(),
            seeds: (0..5).collect(),
            qualities: vec![0.90, 0.95, 0.97, 0.99, 0.995],
            weight_factors: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            dropouts: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            fig2: Fig2Config::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("experiment config: {e}")))?;
        cfg.scenario.validate()?;
        cfg.fusion.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub seed: u64,
    pub q_hat: f64,
    pub q_out_gyro: f64,
    pub q_out_accel: f64,
    pub dt_so3: f64,
    pub dt_r3: f64,
    pub gyro_residual_std: f64,
    pub accel_residual_std: f64,
    pub reprojection_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    /// max |q_out − q̂| for the gyroscope.
    pub max_gyro_deviation: f64,
    /// Extremes of q_out − q̂ for the accelerometer.
    pub min_accel_deviation: f64,
    pub max_accel_deviation: f64,
    /// Extremes of the weighted residual std over both modalities.
    pub min_residual_std: f64,
    pub max_residual_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    pub rows: Vec<QualityRow>,
    pub summary: QualitySummary,
}

/// Fuses every seeded scenario at every requested quality and measures the
/// quality the estimate actually reaches.
pub fn run_quality(config: &ExperimentConfig) -> Result<QualityResult> {
    let jobs: Vec<(u64, f64)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.qualities.iter().map(move |&q| (s, q)))
        .collect();
    if jobs.is_empty() {
        return Err(Error::InvalidInput("quality experiment needs seeds and qualities".into()));
    }
    let data: Vec<SyntheticData> = config
        .seeds
        .par_iter()
        .map(|&seed| simulate(&ScenarioConfig { seed, ..config.scenario.clone() }))
        .collect::<Result<_>>()?;
    let rows = jobs
        .par_iter()
        .map(|&(seed, q_hat)| {
            let d = &data[config.seeds.iter().position(|&s| s == seed).expect("seed")];
            let fusion = FusionConfig {
                q_gyro: q_hat,
                q_accel: q_hat,
                ..config.fusion.clone()
            };
            let run = fuse(&d.tracks, &d.imu, &d.camera, &fusion)?;
            let (q_out_gyro, q_out_accel) = achieved_quality(
                &run.problem.imu,
                run.problem.imu_rate,
                &run.solution.state,
                &run.problem.gravity,
            )?;
            let r = &run.solution.report;
            Ok(QualityRow {
                seed,
                q_hat,
                q_out_gyro,
                q_out_accel,
                dt_so3: run.plan.dt_so3,
                dt_r3: run.plan.dt_r3,
                gyro_residual_std: r.gyro.std,
                accel_residual_std: r.accel.std,
                reprojection_rms: r.reprojection.rms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fold = |f: &dyn Fn(&QualityRow) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        rows.iter().map(f).fold(init, pick)
    };
    let summary = QualitySummary {
        max_gyro_deviation: fold(&|r| (r.q_out_gyro - r.q_hat).abs(), 0.0, f64::max),
        min_accel_deviation: fold(&|r| r.q_out_accel - r.q_hat, f64::INFINITY, f64::min),
        max_accel_deviation: fold(&|r| r.q_out_accel - r.q_hat, f64::NEG_INFINITY, f64::max),
        min_residual_std: fold(&|r| r.gyro_residual_std.min(r.accel_residual_std), f64::INFINITY, f64::min),
        max_residual_std: fold(&|r| r.gyro_residual_std.max(r.accel_residual_std), f64::NEG_INFINITY, f64::max),
    };
    Ok(QualityResult { rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub weight_scale_factor: f64,
    pub epe: f64,
    pub scale_error: f64,
    pub gyro_residual_std: f64,
    pub accel_residual_std: f64,
    pub reprojection_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    /// Factor with the smallest endpoint error.
    pub argmin_factor: f64,
    pub min_epe: f64,
    /// EPE at factor 1 over the minimum.
    pub unit_factor_ratio: f64,
    /// EPE at the largest factor over the minimum.
    pub largest_factor_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightResult {
    pub rows: Vec<WeightRow>,
    pub summary: WeightSummary,
}

/// Length of the trajectory between the first and last measurement.
fn span_length(traj: &Trajectory, (a, b): (f64, f64)) -> Result<f64> {
    path_length(traj, a, b, 0.01)
}

/// Sweeps the IMU weight scale factor on one scenario.
pub fn run_weights(config: &ExperimentConfig) -> Result<WeightResult> {
    if config.weight_factors.is_empty() {
        return Err(Error::InvalidInput("weight experiment needs at least one factor".into()));
    }
    let data = simulate(&config.scenario)?;
    let rows = config
        .weight_factors
        .par_iter()
        .map(|&factor| {
            let fusion = FusionConfig {
                weight_scale_factor: factor,
                ..config.fusion.clone()
            };
            let run = fuse(&data.tracks, &data.imu, &data.camera, &fusion)?;
            let span = run.problem.time_span();
            let traj = run.solution.trajectory();
            let r = &run.solution.report;
            Ok(WeightRow {
                weight_scale_factor: factor,
                epe: endpoint_error(traj, span.0, span.1)?,
                scale_error: scale_error(
                    span_length(traj, span)?,
                    span_length(&data.truth.trajectory, span)?,
                )?,
                gyro_residual_std: r.gyro.std,
                accel_residual_std: r.accel.std,
                reprojection_rms: r.reprojection.rms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| a.epe.total_cmp(&b.epe))
        .expect("nonempty");
    let at = |f: f64| {
        rows.iter()
            .find(|r| r.weight_scale_factor == f)
            .map(|r| r.epe / best.epe)
            .unwrap_or(f64::NAN)
    };
    let largest = config.weight_factors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let summary = WeightSummary {
        argmin_factor: best.weight_scale_factor,
        min_epe: best.epe,
        unit_factor_ratio: at(1.0),
        largest_factor_ratio: at(largest),
    };
    Ok(WeightResult { rows, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRow {
    pub dropout: f64,
    /// Endpoint displacement relative to the run without dropout.
    pub epd: f64,
    pub epe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutSummary {
    /// Adjacent pairs (by increasing dropout) where EPD decreases.
    pub inversions: usize,
    /// EPD at the second-smallest dropout over EPD at the largest.
    pub first_to_last_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutResult {
    pub rows: Vec<DropoutRow>,
    pub summary: DropoutSummary,
}

/// Removes the trailing frames for each dropout length and measures how far
/// the final position moves compared with the full estimate.
pub fn run_dropout(config: &ExperimentConfig) -> Result<DropoutResult> {
    let mut dropouts = config.dropouts.clone();
    dropouts.sort_by(f64::total_cmp);
    if dropouts.len() < 2 {
        return Err(Error::InvalidInput("dropout experiment needs at least two lengths".into()));
    }
    let data = simulate(&config.scenario)?;
    let t_end = sequence_end(&config.scenario);
    let full = fuse(&data.tracks, &data.imu, &data.camera, &config.fusion)?;
    let end = full.problem.time_span().1;
    let runs = dropouts
        .par_iter()
        .map(|&d| {
            let tracks = apply_dropout(&data.tracks, d, t_end);
            let run = fuse(&tracks, &data.imu, &data.camera, &config.fusion)?;
            let span = run.problem.time_span();
            Ok(DropoutRow {
                dropout: d,
                epd: endpoint_distortion(run.solution.trajectory(), full.solution.trajectory(), end)?,
                epe: endpoint_error(run.solution.trajectory(), span.0, end)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inversions = runs.windows(2).filter(|w| w[1].epd < w[0].epd).count();
    let last = runs.last().expect("nonempty").epd;
    let summary = DropoutSummary {
        inversions,
        first_to_last_ratio: runs[1].epd / last,
    };
    Ok(DropoutResult { rows: runs, summary })
}
