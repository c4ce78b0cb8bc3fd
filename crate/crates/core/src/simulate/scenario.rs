use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensors::{CameraModel, ImuBiases};

/// One band of filtered white noise with RMS `amplitude`: white noise through
/// a Butterworth band-pass of the given order with corners `low_hz` and
/// `high_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
    pub amplitude: f64,
    #[serde(default = "default_order")]
    pub order: u32,
}

fn default_order() -> u32 {
    Band::DEFAULT_ORDER
}

impl Band {
    pub const DEFAULT_ORDER: u32 = 4;

    /// Amplitude gain of the band-pass at frequency `f` (zero at DC).
    pub fn gain(&self, f: f64) -> f64 {
        if !(f > 0.0) {
            return 0.0;
        }
        let p = 2 * self.order as i32;
        let high_pass = 1.0 / (1.0 + (self.low_hz / f).powi(p));
        let low_pass = 1.0 / (1.0 + (f / self.high_hz).powi(p));
        (high_pass * low_pass).sqrt()
    }

    pub fn new(low_hz: f64, high_hz: f64, amplitude: f64) -> Self {
        Band {
            low_hz,
            high_hz,
            amplitude,
            order: Self::DEFAULT_ORDER,
        }
    }

    pub fn with_order(self, order: u32) -> Self {
        Band { order, ..self }
    }
}

/// Band plans for the rotation vector (rad) and position (m) of the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub rotation: Vec<Band>,
    pub position: Vec<Band>,
}

impl MotionProfile {
    pub fn is_static(&self) -> bool {
        self.rotation
            .iter()
            .chain(&self.position)
            .all(|b| b.amplitude == 0.0)
    }

    /// Scales every band edge by `factor`.
    pub fn scale_frequencies(&self, factor: f64) -> Self {
        let f = |b: &Band| Band {
            low_hz: b.low_hz * factor,
            high_hz: b.high_hz * factor,
            ..*b
        };
        MotionProfile {
            rotation: self.rotation.iter().map(f).collect(),
            position: self.position.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Slow sweeping motion.
    #[default]
    Handheld,
    /// Walking: adds a step bounce near 2 Hz and high-frequency jitter.
    Bodycam,
    /// Aggressive motion with content up to 15 Hz.
    Fast,
    Static,
}

impl Preset {
    /// Rotation bands roll off with order 2, position bands with order 3.
    pub fn motion(self) -> MotionProfile {
        let plan = |rot: &[(f64, f64, f64)], pos: &[(f64, f64, f64)]| MotionProfile {
            rotation: rot.iter().map(|&(l, h, a)| Band::new(l, h, a).with_order(2)).collect(),
            position: pos.iter().map(|&(l, h, a)| Band::new(l, h, a).with_order(3)).collect(),
        };
        match self {
            Preset::Handheld => plan(&[(0.05, 0.6, 0.25), (0.6, 3.0, 0.04)], &[(0.05, 0.5, 0.8), (0.5, 2.0, 0.05)]),
            Preset::Bodycam => plan(
                &[(0.05, 0.5, 0.25), (1.6, 2.4, 0.04), (3.0, 10.0, 0.008)],
                &[(0.05, 0.5, 1.0), (1.6, 2.4, 0.03), (3.0, 8.0, 0.002)],
            ),
            Preset::Fast => plan(&[(0.1, 3.0, 0.4), (3.0, 15.0, 0.03)], &[(0.1, 2.0, 0.4), (2.0, 10.0, 0.01)]),
            Preset::Static => plan(&[], &[]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        let c = CameraModel::default();
        Intrinsics {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

/// Synthetic scenario description. Every generator is a deterministic
/// function of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration: f64,
    pub imu_rate: f64,
    pub frame_rate: f64,
    pub readout_time: f64,
    pub camera: Intrinsics,
    pub preset: Preset,
    /// Overrides the preset's band plans.
    pub motion: Option<MotionProfile>,
    /// Number of landmarks (= tracks).
    pub n_landmarks: usize,
    /// Landmark distance range from the camera at creation, m.
    pub depth_range: [f64; 2],
    pub max_track_frames: usize,
    pub pixel_noise: f64,
    pub outlier_rate: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    pub closed_loop: bool,
    /// Knot spacing of the truth splines; defaults to 4 IMU periods.
    pub truth_knot_spacing: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            duration: 10.0,
            imu_rate: 300.0,
            frame_rate: 30.0,
            readout_time: 0.03,
            camera: Intrinsics::default(),
            preset: Preset::Handheld,
            motion: None,
            n_landmarks: 600,
            depth_range: [2.0, 30.0],
            max_track_frames: 30,
            pixel_noise: 0.5,
            outlier_rate: 0.0,
            sigma_gyro: 0.005,
            sigma_accel: 0.05,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            closed_loop: true,
            truth_knot_spacing: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.imu_rate > 0.0 && self.frame_rate > 0.0) {
            return bad("rates must be positive".into());
        }
        if !(self.duration >= 2.0) {
            return bad(format!("duration must be at least 2 s, got {}", self.duration));
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[1] >= self.depth_range[0]) {
            return bad("depth range must be positive and ordered".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad("outlier rate must be in [0, 1]".into());
        }
        if !(self.sigma_gyro >= 0.0 && self.sigma_accel >= 0.0 && self.pixel_noise >= 0.0) {
            return bad("noise levels must be nonnegative".into());
        }
        if self.max_track_frames < 2 {
            return bad("tracks need at least 2 frames".into());
        }
        if let Some(dt) = self.truth_knot_spacing {
            if !(dt > 0.0) {
                return bad("truth knot spacing must be positive".into());
            }
        }
        self.camera_model().validate()
    }

    pub fn camera_model(&self) -> CameraModel {
        CameraModel {
            fx: self.camera.fx,
            fy: self.camera.fy,
            cx: self.camera.cx,
            cy: self.camera.cy,
            width: self.camera.width,
            height: self.camera.height,
            readout_time: self.readout_time,
            frame_period: 1.0 / self.frame_rate,
        }
    }

    pub fn motion_profile(&self) -> MotionProfile {
        self.motion.clone().unwrap_or_else(|| self.preset.motion())
    }

    pub fn biases(&self) -> ImuBiases {
        ImuBiases {
            gyro: Vector3::from(self.gyro_bias),
            accel: Vector3::from(self.accel_bias),
        }
    }

    /// Frame start times: every frame whose readout ends within the sequence.
    pub fn frame_times(&self) -> Vec<f64> {
        let period = 1.0 / self.frame_rate;
        (0..)
            .map(|m| m as f64 * period)
            .take_while(|t| t + self.readout_time <= self.duration + 1e-9)
            .collect()
    }

    pub fn imu_times(&self) -> Vec<f64> {
        let n = (self.duration * self.imu_rate + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 / self.imu_rate).collect()
    }

    /// A noise-free, outlier-free variant.
    pub fn noise_free(&self) -> Self {
        ScenarioConfig {
            pixel_noise: 0.0,
            outlier_rate: 0.0,
            sigma_gyro: 0.0,
            sigma_accel: 0.0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig {
            seed: 7,
            preset: Preset::Bodycam,
            motion: Some(Preset::Fast.motion()),
            truth_knot_spacing: Some(0.1),
            ..ScenarioConfig::default()
        };
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ScenarioConfig::from_toml("seed = 3\npreset = \"fast\"\n[camera]\nfx = 800.0\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.preset, Preset::Fast);
        assert_eq!(cfg.camera.fx, 800.0);
        assert_eq!(cfg.camera.fy, 1000.0);
        assert_eq!(cfg.imu_rate, 300.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ScenarioConfig::from_toml("duration = 1.0").is_err());
        assert!(ScenarioConfig::from_toml("imu_rate = 0.0").is_err());
        assert!(ScenarioConfig::from_toml("unknown_key = 1").is_err());
        assert!(ScenarioConfig::from_toml("readout_time = 0.05").is_err());
    }

    #[test]
    fn frame_and_imu_times() {
        let cfg = ScenarioConfig::default();
        let frames = cfg.frame_times();
        assert_eq!(frames.len(), 300);
        assert!(frames.last().unwrap() + cfg.readout_time <= cfg.duration);
        let imu = cfg.imu_times();
        assert_eq!(imu.len(), 3001);
        assert!((imu.last().unwrap() - 10.0).abs() < 1e-12);
    }
}
