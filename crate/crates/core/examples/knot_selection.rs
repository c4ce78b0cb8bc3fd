//! Quality as a function of knot spacing for a simulated gyroscope, and the
//! spacing chosen for a few requested qualities.

use sew::sew::{quality, select_knot_spacing, FrequencyResponseModel};
use sew::simulate::{generate_ground_truth, generate_imu, Preset, ScenarioConfig};
use sew::spectral::vector_spectrum;

fn main() -> sew::Result<()> {
    for preset in [Preset::Handheld, Preset::Bodycam, Preset::Fast] {
        let cfg = ScenarioConfig { seed: 3, preset, n_landmarks: 1, ..Default::default() };
        let imu = generate_imu(&generate_ground_truth(&cfg)?, &cfg)?;
        let spec = vector_spectrum(&imu.gyro(), cfg.imu_rate)?;
        let model = FrequencyResponseModel::new(2);
        println!("{preset:?}");
        for dt in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5] {
            println!("  q({dt:.2} s) = {:.4}", quality(&spec, dt, &model)?);
        }
        for q in [0.9, 0.99, 0.999] {
            let sel = select_knot_spacing(&spec, q, 0.5, &model)?;
            println!("  q̂ = {q}: dt = {:.4} s{}", sel.dt, if sel.saturated { " (saturated)" } else { "" });
        }
    }
    Ok(())
}
