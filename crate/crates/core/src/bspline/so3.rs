use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::{cumulative_basis, cumulative_basis_d1, KnotGrid, Segment};
use crate::error::Result;
use crate::lie::{exp_mat, hat, log_quat, right_jacobian, right_jacobian_inv};

/// Cumulative uniform cubic B-spline on SO(3):
///
/// `R(t) = Q_{i-1} · Π_{j=1..3} Exp(C_j(u) · Log(Q_{i+j-2}ᵀ Q_{i+j-1}))`
///
/// Control rotations are stored as unit quaternions whose signs are kept
/// continuous (consecutive dot products ≥ 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSO3 {
    grid: KnotGrid,
    control: Vec<UnitQuaternion<f64>>,
}

/// Rotation, body angular velocity and their derivatives with respect to a
/// world-frame (left) perturbation `Q_k ← Exp(δ_k) Q_k` of each of the four
/// active control rotations `first ..= first + 3`.
///
/// `d_rotation[k]` maps δ_k to the world-frame perturbation of `R(t)`;
/// `d_omega[k]` maps δ_k to the change of body angular velocity.
#[derive(Debug, Clone, Copy)]
pub struct RotationJacobians {
    pub first: usize,
    pub rotation: Matrix3<f64>,
    pub omega: Vector3<f64>,
    pub d_rotation: [Matrix3<f64>; 4],
    pub d_omega: [Matrix3<f64>; 4],
}

struct SegmentTerms {
    seg: Segment,
    q: [Matrix3<f64>; 4],
    d: [Vector3<f64>; 3],
    b: [f64; 3],
    bd: [f64; 3],
    a: [Matrix3<f64>; 3],
}

impl SplineSO3 {
    pub fn new(t0: f64, knot_spacing: f64, control: Vec<UnitQuaternion<f64>>) -> Result<Self> {
        let grid = KnotGrid::new(t0, knot_spacing, control.len())?;
        let mut s = SplineSO3 { grid, control };
        s.normalize();
        Ok(s)
    }

    pub fn identity(grid: KnotGrid) -> Self {
        SplineSO3 {
            grid,
            control: vec![UnitQuaternion::identity(); grid.count],
        }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn knot_spacing(&self) -> f64 {
        self.grid.dt
    }

    pub fn control_rotations(&self) -> &[UnitQuaternion<f64>] {
        &self.control
    }

    pub fn set_control(&mut self, k: usize, q: UnitQuaternion<f64>) {
        self.control[k] = q;
    }

    /// Renormalizes every control rotation and enforces sign continuity.
    pub fn normalize(&mut self) {
        for k in 0..self.control.len() {
            let mut q = UnitQuaternion::new_normalize(*self.control[k].quaternion());
            if k > 0 && self.control[k - 1].coords.dot(&q.coords) < 0.0 {
                q = UnitQuaternion::new_unchecked(-q.into_inner());
            }
            self.control[k] = q;
        }
    }

    fn terms(&self, t: f64) -> Result<SegmentTerms> {
        let seg = self.grid.locate(t)?;
        let cq = &self.control[seg.first..seg.first + 4];
        let q = [0, 1, 2, 3].map(|j| cq[j].to_rotation_matrix().into_inner());
        let d = [1, 2, 3].map(|j| log_quat(&(cq[j - 1].inverse() * cq[j])));
        let b = cumulative_basis(seg.u);
        let bd = cumulative_basis_d1(seg.u).map(|v| v / self.grid.dt);
        let a = [0, 1, 2].map(|j| exp_mat(&(d[j] * b[j])));
        Ok(SegmentTerms { seg, q, d, b, bd, a })
    }

    /// Rotation matrix (body → world) at `t`.
    pub fn eval(&self, t: f64) -> Result<Matrix3<f64>> {
        let s = self.terms(t)?;
        Ok(s.q[0] * s.a[0] * s.a[1] * s.a[2])
    }

    /// Body-frame angular velocity `vee(Rᵀ Ṙ)` in rad/s.
    pub fn angular_velocity(&self, t: f64) -> Result<Vector3<f64>> {
        let s = self.terms(t)?;
        let mut w = Vector3::zeros();
        for j in 0..3 {
            w = s.a[j].transpose() * w + s.d[j] * s.bd[j];
        }
        Ok(w)
    }

    pub fn eval_with_jacobians(&self, t: f64) -> Result<RotationJacobians> {
        let s = self.terms(t)?;
        let mut prefix = s.q[0];
        let mut omega = Vector3::zeros();
        // δd_m = M_m (δ_m − δ_{m−1})
        let mut m = [Matrix3::zeros(); 3];
        let mut g = [Matrix3::zeros(); 3];
        let mut local = [Matrix3::zeros(); 3];
        for j in 0..3 {
            let jr = right_jacobian(&(s.d[j] * s.b[j]));
            m[j] = right_jacobian_inv(&s.d[j]) * s.q[j + 1].transpose();
            prefix *= s.a[j];
            g[j] = prefix * jr * s.b[j] * m[j];
            let rotated = s.a[j].transpose() * omega;
            local[j] = hat(&rotated) * jr * s.b[j] + Matrix3::identity() * s.bd[j];
            omega = rotated + s.d[j] * s.bd[j];
        }
        // carry each local term through the later Aⱼᵀ factors
        let mut e = [Matrix3::zeros(); 3];
        let mut suffix = Matrix3::<f64>::identity();
        for j in (0..3).rev() {
            e[j] = suffix * local[j] * m[j];
            suffix *= s.a[j].transpose();
        }
        Ok(RotationJacobians {
            first: s.seg.first,
            rotation: prefix,
            omega,
            d_rotation: [
                Matrix3::identity() - g[0],
                g[0] - g[1],
                g[1] - g[2],
                g[2],
            ],
            d_omega: [-e[0], e[0] - e[1], e[1] - e[2], e[2]],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{exp_quat, vee};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    fn random_spline(rng: &mut ChaCha8Rng) -> SplineSO3 {
        let n = rng.random_range(5..10);
        let mut q = exp_quat(&random_vec(rng, 3.0));
        let mut cps = Vec::new();
        for _ in 0..n {
            cps.push(q);
            q *= exp_quat(&random_vec(rng, 0.6));
        }
        SplineSO3::new(rng.random_range(-1.0..1.0), rng.random_range(0.05..0.5), cps).unwrap()
    }

    fn log_mat(r: &Matrix3<f64>) -> Vector3<f64> {
        log_quat(&UnitQuaternion::from_matrix(r))
    }

    #[test]
    fn constant_reproduction() {
        let g = KnotGrid::new(0.0, 0.1, 7).unwrap();
        let id = SplineSO3::identity(g);
        let r0 = exp_quat(&Vector3::new(0.3, -1.2, 2.0));
        let fixed = SplineSO3::new(0.0, 0.1, vec![r0; 7]).unwrap();
        for t in [0.1, 0.25, 0.5] {
            assert!((id.eval(t).unwrap() - Matrix3::identity()).abs().max() < 1e-12);
            assert!(id.angular_velocity(t).unwrap().norm() < 1e-12);
            let r = fixed.eval(t).unwrap();
            assert!((r - r0.to_rotation_matrix().into_inner()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn proper_rotation_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = random_spline(&mut rng);
            let g = *s.grid();
            for i in 0..=20 {
                let t = g.valid_start() + (g.valid_end() - g.valid_start()) * i as f64 / 20.0;
                let r = s.eval(t).unwrap();
                assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-9);
                assert!((r.determinant() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn left_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_spline(&mut rng);
        let qfix = exp_quat(&Vector3::new(0.7, 0.1, -0.4));
        let moved = SplineSO3::new(
            s.grid().t0,
            s.grid().dt,
            s.control_rotations().iter().map(|q| qfix * q).collect(),
        )
        .unwrap();
        let qm = qfix.to_rotation_matrix().into_inner();
        let g = *s.grid();
        for i in 0..10 {
            let t = g.valid_start() + (g.valid_end() - g.valid_start()) * i as f64 / 10.0;
            let a = qm * s.eval(t).unwrap();
            let b = moved.eval(t).unwrap();
            assert!((a - b).abs().max() < 1e-9);
            let wa = s.angular_velocity(t).unwrap();
            let wb = moved.angular_velocity(t).unwrap();
            assert!((wa - wb).norm() < 1e-9);
        }
    }

    #[test]
    fn angular_velocity_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let s = random_spline(&mut rng);
            let g = *s.grid();
            let h = 1e-6 * g.dt;
            let t = rng.random_range(g.valid_start() + h..g.valid_end() - h);
            let r0 = s.eval(t - h).unwrap();
            let r1 = s.eval(t + h).unwrap();
            let numeric = log_mat(&(r0.transpose() * r1)) / (2.0 * h);
            let analytic = s.angular_velocity(t).unwrap();
            assert!((analytic - numeric).norm() <= 1e-5 * analytic.norm().max(1.0));
            // also against vee(Rᵀ Ṙ) with a one-sided matrix difference
            let rd = (s.eval(t + h).unwrap() - s.eval(t - h).unwrap()) / (2.0 * h);
            let w2 = vee(&(s.eval(t).unwrap().transpose() * rd));
            assert!((analytic - w2).norm() <= 1e-5 * analytic.norm().max(1.0));
        }
    }

    #[test]
    fn control_point_jacobians_match_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let s = random_spline(&mut rng);
            let g = *s.grid();
            let t = rng.random_range(g.valid_start()..g.valid_end());
            let jac = s.eval_with_jacobians(t).unwrap();
            assert!((jac.rotation - s.eval(t).unwrap()).abs().max() < 1e-12);
            assert!((jac.omega - s.angular_velocity(t).unwrap()).norm() < 1e-12);
            let h = 1e-6;
            for k in 0..4 {
                for axis in 0..3 {
                    let mut dv = Vector3::zeros();
                    dv[axis] = h;
                    let perturbed = |sign: f64| {
                        let mut p = s.clone();
                        let idx = jac.first + k;
                        p.set_control(idx, exp_quat(&(dv * sign)) * p.control_rotations()[idx]);
                        p
                    };
                    let (plus, minus) = (perturbed(1.0), perturbed(-1.0));
                    let rp = plus.eval(t).unwrap();
                    let rm = minus.eval(t).unwrap();
                    let dr = log_mat(&(rp * rm.transpose())) / (2.0 * h);
                    let col = jac.d_rotation[k].column(axis);
                    let scale = col.norm().max(1.0);
                    assert!((dr - col).norm() <= 1e-4 * scale, "rotation k={k} axis={axis}");
                    let dw = (plus.angular_velocity(t).unwrap() - minus.angular_velocity(t).unwrap()) / (2.0 * h);
                    let col = jac.d_omega[k].column(axis);
                    let scale = col.norm().max(1.0);
                    assert!((dw - col).norm() <= 1e-4 * scale, "omega k={k} axis={axis}: {dw:?} vs {col:?}");
                }
            }
        }
    }
}
