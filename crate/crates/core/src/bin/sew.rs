use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sew::cli::{
    cmd_analyze, cmd_experiment, cmd_fuse, exit_code, AnalyzeParams, FuseInput, Overrides,
};

#[derive(Parser)]
#[command(name = "sew", version, about = "Spline error weighting for continuous-time visual-inertial fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    quality_gyro: Option<f64>,
    #[arg(long)]
    quality_accel: Option<f64>,
    /// Gyroscope noise std, rad/s.
    #[arg(long)]
    sigma_gyro: Option<f64>,
    /// Accelerometer noise std, m/s².
    #[arg(long)]
    sigma_accel: Option<f64>,
    /// Largest knot spacing, s.
    #[arg(long)]
    dt_max: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Select knot spacings and IMU weights for an IMU log.
    Analyze {
        /// CSV with header t,gx,gy,gz,ax,ay,az.
        imu: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Estimate missing noise levels from sample differences (heuristic).
        #[arg(long)]
        estimate_noise: bool,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic experiment: fig2, quality, weights or dropout.
    Experiment {
        name: String,
        /// Experiment config (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weight_scale: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Estimate a trajectory from a scenario or from CSV tracks and IMU.
    Fuse {
        /// Scenario file (TOML) to simulate and fuse.
        #[arg(long, conflicts_with_all = ["tracks", "imu"], required_unless_present_all = ["tracks", "imu"])]
        scenario: Option<PathBuf>,
        /// CSV with header track_id,frame,u,v,frame_time.
        #[arg(long, requires = "imu")]
        tracks: Option<PathBuf>,
        #[arg(long, requires = "tracks")]
        imu: Option<PathBuf>,
        /// Fuse config (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weight_scale: Option<f64>,
        /// Seconds of trailing frames to remove.
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn overrides(c: &Common, seed: Option<u64>, weight_scale: Option<f64>, dropout: Option<f64>) -> Overrides {
    Overrides {
        seed,
        q_gyro: c.quality_gyro,
        q_accel: c.quality_accel,
        sigma_gyro: c.sigma_gyro,
        sigma_accel: c.sigma_accel,
        dt_max: c.dt_max,
        weight_scale,
        dropout,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { imu, common, estimate_noise, out } => {
            let d = AnalyzeParams::default();
            let params = AnalyzeParams {
                q_gyro: common.quality_gyro.unwrap_or(d.q_gyro),
                q_accel: common.quality_accel.unwrap_or(d.q_accel),
                sigma_gyro: common.sigma_gyro,
                sigma_accel: common.sigma_accel,
                dt_max: common.dt_max.unwrap_or(d.dt_max),
                estimate_noise: *estimate_noise,
            };
            cmd_analyze(imu, &params, out.as_deref()).map(|_| ())
        }
        Command::Experiment { name, config, common, seed, weight_scale, out } => {
            cmd_experiment(name, config.as_deref(), out, &overrides(common, *seed, *weight_scale, None)).map(|paths| {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            })
        }
        Command::Fuse { scenario, tracks, imu, config, common, seed, weight_scale, dropout, out } => {
            let input = match (scenario, tracks, imu) {
                (Some(s), _, _) => FuseInput::Scenario(s),
                (None, Some(t), Some(i)) => FuseInput::Files { tracks: t, imu: i },
                _ => unreachable!("clap enforces the input combination"),
            };
            cmd_fuse(input, config.as_deref(), out, &overrides(common, *seed, *weight_scale, *dropout)).map(|m| {
                eprintln!(
                    "epe {:.4} m, reprojection rms {:.3} px, {} iterations ({:?})",
                    m.epe, m.solver.reprojection.rms, m.solver.iterations, m.solver.termination
                );
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
