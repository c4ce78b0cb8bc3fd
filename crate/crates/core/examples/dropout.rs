//! Endpoint distortion when the last seconds of video are removed.

use sew::cli::experiments::{run_dropout, ExperimentConfig};

fn main() -> sew::Result<()> {
    let r = run_dropout(&ExperimentConfig::default())?;
    for row in &r.rows {
        println!("dropout {:3.1} s: epd {:.4} m, epe {:.4} m", row.dropout, row.epd, row.epe);
    }
    println!("{:?}", r.summary);
    Ok(())
}
