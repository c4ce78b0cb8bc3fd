//! Spline error weighting (SEW) for continuous-time visual-inertial fusion.
//!
//! The crate predicts how much of a measured signal a uniform cubic
//! B-spline with a given knot spacing can represent, selects knot spacings
//! from a requested quality, weights inertial residuals by their predicted
//! total residual variance, and estimates a continuous trajectory from IMU
//! data and rolling-shutter feature tracks.
//!
//! Module map:
//!
//! * [`spectral`]: unitary DFT, vector spectra, energy, decimation
//! * [`bspline`]: uniform cubic splines on ℝᵈ and SO(3), least-squares fitting
//! * [`sew`]: frequency response, quality, knot selection, residual weights
//! * [`sensors`]: IMU and camera measurement models
//! * [`fusion`]: cost assembly, damped least-squares solver, metrics
//! * [`simulate`]: synthetic ground truth and measurements
//! * [`cli`]: file formats and the command implementations behind the `sew` binary

pub mod bspline;
pub mod cli;
pub mod error;
pub mod fusion;
mod lie;
pub mod linalg;
pub mod sensors;
pub mod sew;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use lie::{exp_quat, hat, log_quat};
