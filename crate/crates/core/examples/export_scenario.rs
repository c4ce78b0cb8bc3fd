//! Writes a simulated sequence as `imu.csv`, `tracks.csv` and
//! `scenario.toml` for use with `sew fuse --tracks --imu`.

use std::path::PathBuf;

use sew::cli::io::{write_imu_csv, write_tracks_csv};
use sew::simulate::{simulate, ScenarioConfig};

fn main() -> sew::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenario_out".into()));
    std::fs::create_dir_all(&dir)?;
    let cfg = ScenarioConfig { seed: 7, ..Default::default() };
    let data = simulate(&cfg)?;
    write_imu_csv(&dir.join("imu.csv"), &data.imu)?;
    write_tracks_csv(&dir.join("tracks.csv"), &data.tracks)?;
    std::fs::write(dir.join("scenario.toml"), cfg.to_toml())?;
    println!("{} IMU samples, {} observations in {}", data.imu.len(), data.tracks.len(), dir.display());
    Ok(())
}
