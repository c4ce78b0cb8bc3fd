//! Requested against achieved quality on a few seeded sequences.

use sew::cli::experiments::{run_quality, ExperimentConfig};

fn main() -> sew::Result<()> {
    let cfg = ExperimentConfig { seeds: vec![0, 1], ..Default::default() };
    let r = run_quality(&cfg)?;
    println!("{:>4} {:>6} {:>8} {:>8} {:>7} {:>7}", "seed", "q̂", "q_gyro", "q_accel", "dt_so3", "dt_r3");
    for row in &r.rows {
        println!(
            "{:4} {:6.3} {:8.4} {:8.4} {:7.4} {:7.4}",
            row.seed, row.q_hat, row.q_out_gyro, row.q_out_accel, row.dt_so3, row.dt_r3
        );
    }
    println!("{:?}", r.summary);
    Ok(())
}
