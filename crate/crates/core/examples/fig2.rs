//! Least-squares spline fits of a noisy test signal over a range of knot
//! spacings: empirical residual, predicted residual, noise level and the
//! error against the clean signal.

use sew::cli::experiments::{run_fig2, Fig2Config};

fn main() -> sew::Result<()> {
    let r = run_fig2(&Fig2Config::default())?;
    println!("{:>8} {:>10} {:>10} {:>8} {:>10}", "dt", "sigma_r", "predicted", "sigma_n", "sigma_r0");
    for row in &r.rows {
        println!(
            "{:8.4} {:10.5} {:10.5} {:8.3} {:10.5}",
            row.dt, row.sigma_r_empirical, row.sigma_r_predicted, row.sigma_n, row.sigma_r0
        );
    }
    let s = &r.summary;
    println!("best spacing {:.3} s (interior: {})", s.optimal_dt, s.interior_minimum);
    println!("largest relative prediction error above it: {:.1}%", 100.0 * s.max_relative_error_above_optimum);
    println!("sigma_r / sigma_n at the largest spacing: {:.2}", s.noise_underestimate_at_max_dt);
    Ok(())
}
