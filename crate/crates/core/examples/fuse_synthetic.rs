//! Simulates a handheld sequence and fuses it from a cold start.

use sew::fusion::{achieved_quality, endpoint_error, fuse, position_rms, FusionConfig};
use sew::simulate::{simulate, ScenarioConfig};

fn main() -> sew::Result<()> {
    let data = simulate(&ScenarioConfig { seed: 1, ..Default::default() })?;
    let run = fuse(&data.tracks, &data.imu, &data.camera, &FusionConfig::default())?;
    let r = &run.solution.report;
    println!("knot spacings: {:.4} s (SO3), {:.4} s (R3)", run.plan.dt_so3, run.plan.dt_r3);
    println!("weights: gyro {:.3e}, accel {:.3e}", run.problem.gamma_gyro, run.problem.gamma_accel);
    println!("{} iterations, {:?}, cost {:.4e} -> {:.4e}", r.iterations, r.termination, r.initial_cost, r.final_cost);
    println!("reprojection rms {:.3} px", r.reprojection.rms);
    println!("weighted residual std: gyro {:.3}, accel {:.3}", r.gyro.std, r.accel.std);
    let (qg, qa) = achieved_quality(&run.problem.imu, run.problem.imu_rate, &run.solution.state, &run.problem.gravity)?;
    println!("achieved quality: gyro {qg:.4}, accel {qa:.4}");
    let (a, b) = run.problem.time_span();
    let traj = run.solution.trajectory();
    println!("endpoint error {:.4} m", endpoint_error(traj, a, b)?);
    let times: Vec<f64> = (0..=500).map(|i| a + (b - a) * i as f64 / 500.0).collect();
    println!("aligned position rms {:.4} m", position_rms(traj, &data.truth.trajectory, &times)?);
    println!("gyro bias {:?}", run.solution.biases().gyro.as_slice());
    Ok(())
}
