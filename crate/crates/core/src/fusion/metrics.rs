use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use crate::bspline::Trajectory;
use crate::error::{Error, Result};

/// ‖p(t0) − p(t_end)‖, meters.
pub fn endpoint_error(traj: &Trajectory, t0: f64, t_end: f64) -> Result<f64> {
    Ok((traj.position.eval(t0, 0)? - traj.position.eval(t_end, 0)?).norm())
}

/// |l_true − l̂| / l_true.
pub fn scale_error(estimated: f64, truth: f64) -> Result<f64> {
    if !(truth > 0.0) {
        return Err(Error::InvalidInput("true length must be positive".into()));
    }
    Ok((truth - estimated).abs() / truth)
}

/// Distance between the endpoints of two estimates sharing their start.
pub fn endpoint_distortion(traj_dropout: &Trajectory, traj_full: &Trajectory, t_end: f64) -> Result<f64> {
    Ok((traj_dropout.position.eval(t_end, 0)? - traj_full.position.eval(t_end, 0)?).norm())
}

/// Polyline length of the position spline sampled every `step` seconds.
pub fn path_length(traj: &Trajectory, t0: f64, t1: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && t1 >= t0) {
        return Err(Error::InvalidInput("path_length needs step > 0 and t1 ≥ t0".into()));
    }
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let mut prev = traj.position.eval(t0, 0)?;
    let mut total = 0.0;
    for i in 1..=n {
        let t = (t0 + i as f64 * step).min(t1);
        let p = traj.position.eval(t, 0)?;
        total += (p - prev).norm();
        prev = p;
    }
    Ok(total)
}

/// Rotation about z and translation minimizing Σ‖T·est_i − truth_i‖².
pub fn align_yaw_translation(est: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<Isometry3<f64>> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::InvalidInput("alignment needs equally many, nonempty point sets".into()));
    }
    let n = est.len() as f64;
    let ce = est.iter().sum::<Vector3<f64>>() / n;
    let ct = truth.iter().sum::<Vector3<f64>>() / n;
    let (mut s, mut c) = (0.0, 0.0);
    for (e, t) in est.iter().zip(truth) {
        let (e, t) = (e - ce, t - ct);
        s += e.x * t.y - e.y * t.x;
        c += e.x * t.x + e.y * t.y;
    }
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), s.atan2(c));
    Ok(Isometry3::from_parts(Translation3::from(ct - rot * ce), rot))
}

/// RMS position difference at `times` after yaw-and-translation alignment.
pub fn position_rms(est: &Trajectory, truth: &Trajectory, times: &[f64]) -> Result<f64> {
    let pe = times.iter().map(|&t| est.position.eval(t, 0)).collect::<Result<Vec<_>>>()?;
    let pt = times.iter().map(|&t| truth.position.eval(t, 0)).collect::<Result<Vec<_>>>()?;
    let iso = align_yaw_translation(&pe, &pt)?;
    let ss: f64 = pe.iter().zip(&pt).map(|(e, t)| (iso * nalgebra::Point3::from(*e) - nalgebra::Point3::from(*t)).norm_squared()).sum();
    Ok((ss / times.len() as f64).sqrt())
}
