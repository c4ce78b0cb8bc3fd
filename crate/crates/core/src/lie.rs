//! Minimal SO(3) toolkit: exponential/logarithm maps and their right Jacobians.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

const SMALL_ANGLE: f64 = 1e-6;

#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn exp_quat(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (w, s) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, s * phi.x, s * phi.y, s * phi.z))
}

/// Rotation vector of `q`, taking the short way around (angle in [0, π]).
pub fn log_quat(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < SMALL_ANGLE {
        // theta = 2 atan2(s, w) ≈ 2 s / w
        v * (2.0 / w) * (1.0 - s * s / (3.0 * w * w))
    } else {
        let theta = 2.0 * s.atan2(w);
        v * (theta / s)
    }
}

pub fn exp_mat(phi: &Vector3<f64>) -> Matrix3<f64> {
    exp_quat(phi).to_rotation_matrix().into_inner()
}

/// Right Jacobian: Exp(φ + δ) ≈ Exp(φ) Exp(J_r(φ) δ).
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = hat(phi);
    let k2 = k * k;
    if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        Matrix3::identity() - 0.5 * k + k2 / 6.0
    } else {
        let theta = theta2.sqrt();
        Matrix3::identity() - ((1.0 - theta.cos()) / theta2) * k
            + ((theta - theta.sin()) / (theta2 * theta)) * k2
    }
}

/// Inverse right Jacobian: Log(Exp(φ) Exp(δ)) ≈ φ + J_r⁻¹(φ) δ.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = hat(phi);
    let k2 = k * k;
    if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        Matrix3::identity() + 0.5 * k + k2 / 12.0
    } else {
        let theta = theta2.sqrt();
        let c = 1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
        Matrix3::identity() + 0.5 * k + c * k2
    }
}
