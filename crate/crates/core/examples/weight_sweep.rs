//! Endpoint and scale error of a bodycam-like sequence as the IMU weights
//! are scaled up and down.

use sew::cli::experiments::{run_weights, ExperimentConfig};
use sew::simulate::{Preset, ScenarioConfig};

fn main() -> sew::Result<()> {
    let cfg = ExperimentConfig {
        scenario: ScenarioConfig { seed: 0, preset: Preset::Bodycam, ..Default::default() },
        ..Default::default()
    };
    let r = run_weights(&cfg)?;
    println!("{:>8} {:>9} {:>10} {:>9} {:>9}", "factor", "epe [m]", "scale err", "gyro std", "acc std");
    for row in &r.rows {
        println!(
            "{:8.0e} {:9.4} {:10.2e} {:9.2} {:9.2}",
            row.weight_scale_factor, row.epe, row.scale_error, row.gyro_residual_std, row.accel_residual_std
        );
    }
    println!("{:?}", r.summary);
    Ok(())
}
