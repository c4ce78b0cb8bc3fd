//! Knot spacings and residual weights for an IMU log, as written by
//! `sew analyze`. Pass a CSV path to analyze your own log.

use sew::cli::io::read_imu_csv;
use sew::cli::{analyze, AnalyzeParams};
use sew::simulate::{generate_ground_truth, generate_imu, ScenarioConfig};

fn main() -> sew::Result<()> {
    let imu = match std::env::args().nth(1) {
        Some(path) => read_imu_csv(path.as_ref())?,
        None => {
            let cfg = ScenarioConfig { seed: 5, n_landmarks: 1, ..Default::default() };
            generate_imu(&generate_ground_truth(&cfg)?, &cfg)?
        }
    };
    let params = AnalyzeParams {
        sigma_gyro: Some(0.005),
        sigma_accel: Some(0.05),
        estimate_noise: true,
        ..Default::default()
    };
    print!("{}", analyze(&imu, &params)?.to_json());
    Ok(())
}
