//! File formats and command implementations for the `sew` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

pub mod experiments;
pub mod io;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    achieved_quality, endpoint_distortion, endpoint_error, fuse, imu_residuals, path_length,
    reprojection_residuals, scale_error, FusionConfig, FusionReport,
};
use crate::sensors::{CameraModel, ImuLog};
use crate::sew::{weights_from_quality, ImuResponseModels, WeightRequest};
use crate::simulate::{apply_dropout, sequence_end, simulate, Intrinsics, ScenarioConfig};
use crate::spectral::{vector_spectrum, Energy};

use experiments::{run_dropout, run_fig2, run_quality, run_weights, ExperimentConfig};
use io::{read_imu_csv, read_tracks_csv, sample_trajectory, write_csv, write_trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_)
        | Error::Degenerate(_)
        | Error::DegenerateWeight
        | Error::NoBracket { .. }
        | Error::Fit(_)
        | Error::Cheirality { .. }
        | Error::EmptyKnotInterval { .. }
        | Error::OutOfDomain { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Noise std from the median absolute first difference:
/// `1.4826 · median|x[i+1] − x[i]| / √2`, pooled over the three axes.
/// A heuristic: it is biased upward when the signal changes noticeably
/// between samples.
pub fn estimate_noise_mad(samples: &[Vector3<f64>]) -> Result<f64> {
    let mut d: Vec<f64> = samples
        .windows(2)
        .flat_map(|w| (0..3).map(move |i| (w[1][i] - w[0][i]).abs()))
        .collect();
    if d.is_empty() {
        return Err(Error::InvalidInput("noise estimation needs at least two samples".into()));
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    Ok(1.4826 * median / 2f64.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeParams {
    pub q_gyro: f64,
    pub q_accel: f64,
    /// Required unless `estimate_noise` is set.
    pub sigma_gyro: Option<f64>,
    pub sigma_accel: Option<f64>,
    pub dt_max: f64,
    pub estimate_noise: bool,
}

impl Default for AnalyzeParams {
    fn default() -> Self {
        AnalyzeParams {
            q_gyro: 0.99,
            q_accel: 0.97,
            sigma_gyro: None,
            sigma_accel: None,
            dt_max: 0.5,
            estimate_noise: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityAnalysis {
    pub requested_quality: f64,
    pub knot_spacing: f64,
    /// q at the selected spacing.
    pub quality: f64,
    pub saturated: bool,
    pub sigma_n: f64,
    /// Whether `sigma_n` came from the median-difference heuristic.
    pub sigma_n_estimated: bool,
    pub sigma_e2: f64,
    pub sigma_f2: f64,
    pub sigma_r2: f64,
    pub gamma: f64,
    /// Spectral energy after removing the mean.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub n: usize,
    pub sample_rate: f64,
}

/// Knot spacings and IMU weights for one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOutput {
    pub dt_so3: f64,
    pub dt_r3: f64,
    pub dt_max: f64,
    pub gyro: ModalityAnalysis,
    pub accel: ModalityAnalysis,
    pub spectrum: SpectrumSummary,
    pub warnings: Vec<String>,
}

impl AnalysisOutput {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("analysis serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

pub fn analyze(imu: &ImuLog, params: &AnalyzeParams) -> Result<AnalysisOutput> {
    let rate = imu
        .sample_rate()
        .ok_or_else(|| Error::InvalidInput("IMU log needs at least two samples".into()))?;
    let (gyro, accel) = (imu.gyro(), imu.accel());
    let mut warnings = Vec::new();
    let mut sigma = |given: Option<f64>, samples: &[Vector3<f64>], name: &str| -> Result<(f64, bool)> {
        match given {
            Some(s) => Ok((s, false)),
            None if params.estimate_noise => {
                let s = estimate_noise_mad(samples)?;
                warnings.push(format!("{name}: noise std {s:.6e} estimated heuristically from sample differences"));
                Ok((s, true))
            }
            None => Err(Error::InvalidInput(format!(
                "{name} noise std is required (or enable noise estimation)"
            ))),
        }
    };
    let (sigma_gyro, est_g) = sigma(params.sigma_gyro, &gyro, "gyro")?;
    let (sigma_accel, est_a) = sigma(params.sigma_accel, &accel, "accel")?;
    let gyro_spec = vector_spectrum(&gyro, rate)?;
    let accel_spec = vector_spectrum(&accel, rate)?;
    let req = WeightRequest {
        q_gyro: params.q_gyro,
        q_accel: params.q_accel,
        sigma_gyro,
        sigma_accel,
        dt_max: params.dt_max,
        models: ImuResponseModels::default(),
    };
    let plan = weights_from_quality(&gyro_spec, &accel_spec, &req)?;
    warnings.extend(plan.warnings.iter().cloned());
    let modality = |q, sel: &crate::sew::KnotSelection, p: &crate::sew::ResidualPrediction, s, est, e| ModalityAnalysis {
        requested_quality: q,
        knot_spacing: sel.dt,
        quality: sel.quality,
        saturated: sel.saturated,
        sigma_n: s,
        sigma_n_estimated: est,
        sigma_e2: p.sigma_e2,
        sigma_f2: p.sigma_f2,
        sigma_r2: p.sigma_r2,
        gamma: p.gamma,
        energy: e,
    };
    Ok(AnalysisOutput {
        dt_so3: plan.dt_so3,
        dt_r3: plan.dt_r3,
        dt_max: params.dt_max,
        gyro: modality(params.q_gyro, &plan.gyro_selection, &plan.gyro, sigma_gyro, est_g, gyro_spec.energy()),
        accel: modality(params.q_accel, &plan.accel_selection, &plan.accel, sigma_accel, est_a, accel_spec.energy()),
        spectrum: SpectrumSummary { n: gyro_spec.len(), sample_rate: rate },
        warnings,
    })
}

/// Reads an IMU CSV, analyzes it and writes the JSON document to `out`
/// (stdout when `None`). Warnings also go to stderr.
pub fn cmd_analyze(imu_csv: &Path, params: &AnalyzeParams, out: Option<&Path>) -> Result<AnalysisOutput> {
    let imu = read_imu_csv(imu_csv)?;
    let analysis = analyze(&imu, params)?;
    for w in &analysis.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(p) => fs::write(p, analysis.to_json()).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => print!("{}", analysis.to_json()),
    }
    Ok(analysis)
}

pub const EXPERIMENTS: [&str; 4] = ["fig2", "quality", "weights", "dropout"];

/// Overrides applied on top of an experiment or fusion config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub q_gyro: Option<f64>,
    pub q_accel: Option<f64>,
    pub sigma_gyro: Option<f64>,
    pub sigma_accel: Option<f64>,
    pub dt_max: Option<f64>,
    pub weight_scale: Option<f64>,
    pub dropout: Option<f64>,
}

impl Overrides {
    fn apply_fusion(&self, f: &mut FusionConfig) {
        if let Some(v) = self.q_gyro {
            f.q_gyro = v;
        }
        if let Some(v) = self.q_accel {
            f.q_accel = v;
        }
        if let Some(v) = self.sigma_gyro {
            f.sigma_gyro = v;
        }
        if let Some(v) = self.sigma_accel {
            f.sigma_accel = v;
        }
        if let Some(v) = self.dt_max {
            f.dt_max = v;
        }
        if let Some(v) = self.weight_scale {
            f.weight_scale_factor = v;
        }
    }
}

/// Runs one experiment, writing `<name>.csv` and `<name>_summary.json` into
/// `out_dir`. Returns the paths written.
pub fn cmd_experiment(
    name: &str,
    config_path: Option<&Path>,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<Vec<PathBuf>> {
    if !EXPERIMENTS.contains(&name) {
        return Err(Error::InvalidInput(format!(
            "unknown experiment `{name}`; valid names: {}",
            EXPERIMENTS.join(", ")
        )));
    }
    let mut cfg = match config_path {
        Some(p) => ExperimentConfig::from_toml(&read_text(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = overrides.seed {
        cfg.scenario.seed = s;
        cfg.fig2.seed = s;
    }
    overrides.apply_fusion(&mut cfg.fusion);
    if let (Some(g), Some(a)) = (overrides.sigma_gyro, overrides.sigma_accel) {
        cfg.scenario.sigma_gyro = g;
        cfg.scenario.sigma_accel = a;
    }
    cfg.fusion.validate()?;
    ensure_dir(out_dir)?;
    let csv = out_dir.join(format!("{name}.csv"));
    let json = out_dir.join(format!("{name}_summary.json"));
    match name {
        "fig2" => {
            let r = run_fig2(&cfg.fig2)?;
            write_csv(&csv, &r.rows)?;
            write_json(&json, &r.summary)?;
        }
        "quality" => {
            let r = run_quality(&cfg)?;
            write_csv(&csv, &r.rows)?;
            write_json(&json, &r.summary)?;
        }
        "weights" => {
            let r = run_weights(&cfg)?;
            write_csv(&csv, &r.rows)?;
            write_json(&json, &r.summary)?;
        }
        _ => {
            let r = run_dropout(&cfg)?;
            write_csv(&csv, &r.rows)?;
            write_json(&json, &r.summary)?;
        }
    }
    Ok(vec![csv, json])
}

/// Camera description for fusing CSV inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: Intrinsics,
    pub readout_time: f64,
    pub frame_rate: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let c = CameraModel::default();
        CameraConfig {
            intrinsics: Intrinsics::default(),
            readout_time: c.readout_time,
            frame_rate: 1.0 / c.frame_period,
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> CameraModel {
        let i = &self.intrinsics;
        CameraModel {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
            readout_time: self.readout_time,
            frame_period: 1.0 / self.frame_rate,
        }
    }
}

/// Settings of `sew fuse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseConfig {
    pub fusion: FusionConfig,
    /// Used with CSV inputs; a scenario brings its own camera.
    pub camera: CameraConfig,
    /// Trajectory output rate, Hz.
    pub output_rate: f64,
    pub histogram_bins: usize,
    /// Half-width of the histograms in standardized units (pixels for
    /// reprojection residuals).
    pub histogram_range: f64,
    /// True path length, m, for the scale error of CSV inputs.
    pub true_length: Option<f64>,
    /// Seconds of trailing frames to drop; also reports the endpoint distortion.
    pub dropout: Option<f64>,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig {
            fusion: FusionConfig::default(),
            camera: CameraConfig::default(),
            output_rate: 100.0,
            histogram_bins: 60,
            histogram_range: 6.0,
            true_length: None,
            dropout: None,
        }
    }
}

impl FuseConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: FuseConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("fuse config: {e}")))?;
        cfg.fusion.validate()?;
        if !(cfg.output_rate > 0.0 && cfg.histogram_bins > 0 && cfg.histogram_range > 0.0) {
            return Err(Error::InvalidInput("output rate, histogram bins and range must be positive".into()));
        }
        Ok(cfg)
    }
}

pub enum FuseInput<'a> {
    Scenario(&'a Path),
    Files { tracks: &'a Path, imu: &'a Path },
}

#[derive(Debug, Clone, Serialize)]
pub struct FuseMetrics {
    pub epe: f64,
    pub epd: Option<f64>,
    pub scale_error: Option<f64>,
    pub path_length: f64,
    pub dt_so3: f64,
    pub dt_r3: f64,
    pub gamma_gyro: f64,
    pub gamma_accel: f64,
    pub q_out_gyro: f64,
    pub q_out_accel: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    pub warnings: Vec<String>,
    pub solver: FusionReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow<'a> {
    pub modality: &'a str,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

fn histogram<'a>(modality: &'a str, values: &[f64], bins: usize, half: f64) -> Vec<HistogramRow<'a>> {
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = ((v + half) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramRow {
            modality,
            bin_low: -half + k as f64 * width,
            bin_high: -half + (k + 1) as f64 * width,
            count,
        })
        .collect()
}

/// Fuses a scenario (simulated on the fly) or CSV inputs, and writes
/// `trajectory.csv`, `metrics.json` and `residual_histogram.csv`.
pub fn cmd_fuse(input: FuseInput, config_path: Option<&Path>, out_dir: &Path, overrides: &Overrides) -> Result<FuseMetrics> {
    let mut cfg = match config_path {
        Some(p) => FuseConfig::from_toml(&read_text(p)?)?,
        None => FuseConfig::default(),
    };
    overrides.apply_fusion(&mut cfg.fusion);
    if overrides.dropout.is_some() {
        cfg.dropout = overrides.dropout;
    }
    cfg.fusion.validate()?;
    let (tracks, imu, camera, truth_length, t_end, truth) = match input {
        FuseInput::Scenario(p) => {
            let mut sc = ScenarioConfig::from_toml(&read_text(p)?)?;
            if let Some(s) = overrides.seed {
                sc.seed = s;
            }
            let data = simulate(&sc)?;
            let end = sequence_end(&sc);
            (data.tracks, data.imu, data.camera, None, end, Some(data.truth.trajectory))
        }
        FuseInput::Files { tracks, imu } => {
            let tracks = read_tracks_csv(tracks)?;
            let imu = read_imu_csv(imu)?;
            let camera = cfg.camera.model();
            let end = tracks
                .observations
                .iter()
                .map(|o| o.frame_time)
                .fold(f64::NEG_INFINITY, f64::max)
                + camera.frame_period;
            (tracks, imu, camera, cfg.true_length, end, None)
        }
    };
    let run = fuse(&tracks, &imu, &camera, &cfg.fusion)?;
    let (a, b) = run.problem.time_span();
    let traj = run.solution.trajectory();
    let epd = match cfg.dropout {
        Some(d) if d > 0.0 => {
            let cut = fuse(&apply_dropout(&tracks, d, t_end), &imu, &camera, &cfg.fusion)?;
            Some(endpoint_distortion(cut.solution.trajectory(), traj, b)?)
        }
        _ => None,
    };
    let length = path_length(traj, a, b, 0.01)?;
    let true_length = match &truth {
        Some(t) => Some(path_length(t, a, b, 0.01)?),
        None => truth_length,
    };
    let (q_out_gyro, q_out_accel) =
        achieved_quality(&run.problem.imu, run.problem.imu_rate, &run.solution.state, &run.problem.gravity)?;
    let biases = run.solution.biases();
    let metrics = FuseMetrics {
        epe: endpoint_error(traj, a, b)?,
        epd,
        scale_error: true_length.map(|l| scale_error(length, l)).transpose()?,
        path_length: length,
        dt_so3: run.plan.dt_so3,
        dt_r3: run.plan.dt_r3,
        gamma_gyro: run.problem.gamma_gyro,
        gamma_accel: run.problem.gamma_accel,
        q_out_gyro,
        q_out_accel,
        gyro_bias: biases.gyro.into(),
        accel_bias: biases.accel.into(),
        warnings: run.plan.warnings.clone(),
        solver: run.solution.report.clone(),
    };

    ensure_dir(out_dir)?;
    let records = sample_trajectory(traj, a, b, cfg.output_rate)?;
    let path = out_dir.join("trajectory.csv");
    write_trajectory(
        fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        &records,
    )?;
    write_json(&out_dir.join("metrics.json"), &metrics)?;

    let state = &run.solution.state;
    let pixels: Vec<f64> = reprojection_residuals(&run.problem, state)?
        .into_iter()
        .flatten()
        .flat_map(|r| [r.x, r.y])
        .collect();
    let imu_res = imu_residuals(&run.problem, state)?;
    let (sg, sa) = (run.problem.gamma_gyro.sqrt(), run.problem.gamma_accel.sqrt());
    let gyro: Vec<f64> = imu_res.iter().flat_map(|(g, _)| g.iter().map(move |v| v * sg).collect::<Vec<_>>()).collect();
    let accel: Vec<f64> = imu_res.iter().flat_map(|(_, a)| a.iter().map(move |v| v * sa).collect::<Vec<_>>()).collect();
    let (bins, half) = (cfg.histogram_bins, cfg.histogram_range);
    let mut rows = histogram("gyro", &gyro, bins, half);
    rows.extend(histogram("accel", &accel, bins, half));
    rows.extend(histogram("reprojection", &pixels, bins, half));
    write_csv(&out_dir.join("residual_histogram.csv"), &rows)?;
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::generate_imu;
    use crate::simulate::{generate_ground_truth, Preset};

    fn static_log(seed: u64) -> ImuLog {
        let cfg = ScenarioConfig {
            seed,
            preset: Preset::Static,
            n_landmarks: 1,
            ..ScenarioConfig::default()
        };
        generate_imu(&generate_ground_truth(&cfg).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn mad_estimator_recovers_white_noise() {
        let imu = static_log(4);
        let g = estimate_noise_mad(&imu.gyro()).unwrap();
        let a = estimate_noise_mad(&imu.accel()).unwrap();
        assert!((g / 0.005 - 1.0).abs() < 0.05, "{g}");
        assert!((a / 0.05 - 1.0).abs() < 0.05, "{a}");
    }

    #[test]
    fn analysis_round_trips_and_is_deterministic() {
        let data = simulate(&ScenarioConfig { seed: 2, n_landmarks: 10, ..Default::default() }).unwrap();
        let params = AnalyzeParams {
            sigma_gyro: Some(0.005),
            sigma_accel: Some(0.05),
            ..Default::default()
        };
        let a = analyze(&data.imu, &params).unwrap();
        let text = a.to_json();
        assert_eq!(AnalysisOutput::from_json(&text).unwrap(), a);
        assert_eq!(analyze(&data.imu, &params).unwrap().to_json(), text);
        assert!(a.warnings.is_empty());
        assert!((a.gyro.gamma * a.gyro.sigma_r2 - 1.0).abs() < 1e-12);
        for dt in [a.dt_so3, a.dt_r3] {
            assert!((0.01..0.2).contains(&dt), "{dt}");
        }
    }

    #[test]
    fn static_log_saturates_with_warning() {
        let params = AnalyzeParams {
            sigma_gyro: Some(0.005),
            sigma_accel: Some(0.05),
            ..Default::default()
        };
        let imu = static_log(1);
        let a = analyze(&imu, &params).unwrap();
        let dt_min = 2.0 / a.spectrum.sample_rate;
        assert!(a.gyro.saturated && a.accel.saturated);
        assert!((a.dt_so3 - dt_min).abs() < 1e-12 && (a.dt_r3 - dt_min).abs() < 1e-12);
        assert_eq!(a.warnings.len(), 2);
    }

    #[test]
    fn missing_noise_is_an_input_error() {
        let err = analyze(&static_log(1), &AnalyzeParams::default()).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_INPUT);
        let est = analyze(&static_log(1), &AnalyzeParams { estimate_noise: true, ..Default::default() }).unwrap();
        assert!(est.gyro.sigma_n_estimated && est.accel.sigma_n_estimated);
    }

    #[test]
    fn histogram_bins_cover_range() {
        let rows = histogram("x", &[-0.5, 0.25, 0.3, 10.0], 4, 1.0);
        assert_eq!(rows.iter().map(|r| r.count).collect::<Vec<_>>(), vec![0, 1, 2, 0]);
        assert_eq!(rows[0].bin_low, -1.0);
        assert_eq!(rows[3].bin_high, 1.0);
    }

    #[test]
    fn unknown_experiment_lists_names() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_experiment("fig9", None, dir.path(), &Overrides::default()).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_INPUT);
        assert!(err.to_string().contains("fig2, quality, weights, dropout"));
    }
}
