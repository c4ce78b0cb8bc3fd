//! Uniform cubic B-splines over ℝᵈ and SO(3).
//!
//! Control point `k` sits at time `t0 + k·Δt`. The segment starting at knot
//! `i` blends control points `i-1 ..= i+2`, so `K` control points give the
//! valid interval `[t0 + Δt, t0 + (K-2)·Δt]`. The right end is accepted as
//! the end of the last segment; nothing outside is extrapolated.
//!
//! Derivatives follow the derivative theorem: an order-k derivative of a
//! degree-3 spline is a degree-(3-k) spline on the same knot spacing, with
//! knots shifted by half a spacing for odd k. Knot selection in
//! [`crate::sew`] relies on this to pick the knot spacing from the gyroscope
//! (first derivative of the rotation spline) and accelerometer signals.

mod fit;
mod r3;
mod so3;

pub use fit::{fit_least_squares_1d, LeastSquaresFit};
pub use r3::{SplineR1, SplineR3, UniformSpline};
pub use so3::{RotationJacobians, SplineSO3};

use crate::error::{Error, Result};

/// Uniform cubic blending weights for `u ∈ [0, 1]`.
#[inline]
pub fn basis(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    let v = 1.0 - u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// d/du of [`basis`].
#[inline]
pub fn basis_d1(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let v = 1.0 - u;
    [
        -0.5 * v * v,
        0.5 * (3.0 * u2 - 4.0 * u),
        0.5 * (-3.0 * u2 + 2.0 * u + 1.0),
        0.5 * u2,
    ]
}

/// d²/du² of [`basis`].
#[inline]
pub fn basis_d2(u: f64) -> [f64; 4] {
    [1.0 - u, 3.0 * u - 2.0, 1.0 - 3.0 * u, u]
}

/// Cumulative weights `C_j = Σ_{l ≥ j} B_l` for j = 1..3 (C_0 = 1).
#[inline]
pub fn cumulative_basis(u: f64) -> [f64; 3] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (u3 - 3.0 * u2 + 3.0 * u + 5.0) / 6.0,
        (-2.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// d/du of [`cumulative_basis`].
#[inline]
pub fn cumulative_basis_d1(u: f64) -> [f64; 3] {
    let v = 1.0 - u;
    [0.5 * v * v, 0.5 * (-2.0 * u * u + 2.0 * u + 1.0), 0.5 * u * u]
}

/// Uniform knot layout shared by every spline type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotGrid {
    pub t0: f64,
    pub dt: f64,
    pub count: usize,
}

/// Segment lookup result: first active control point and local parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub first: usize,
    pub u: f64,
}

impl KnotGrid {
    pub fn new(t0: f64, dt: f64, count: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "knot spacing must be positive, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidInput("t0 must be finite".into()));
        }
        if count < 4 {
            return Err(Error::InvalidInput(format!(
                "cubic spline needs at least 4 control points, got {count}"
            )));
        }
        Ok(KnotGrid { t0, dt, count })
    }

    /// Smallest grid whose valid interval starts at `t_first` and reaches `t_last`.
    pub fn covering(t_first: f64, t_last: f64, dt: f64) -> Result<Self> {
        if !(t_last >= t_first) {
            return Err(Error::InvalidInput(format!(
                "empty time span [{t_first}, {t_last}]"
            )));
        }
        let intervals = ((t_last - t_first) / dt - 1e-9).ceil().max(1.0) as usize;
        KnotGrid::new(t_first - dt, dt, intervals + 3)
    }

    pub fn valid_start(&self) -> f64 {
        self.t0 + self.dt
    }

    pub fn valid_end(&self) -> f64 {
        self.t0 + (self.count - 2) as f64 * self.dt
    }

    pub fn knot_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn locate(&self, t: f64) -> Result<Segment> {
        let s = (t - self.t0) / self.dt;
        let last = (self.count - 3) as f64;
        let eps = 1e-9;
        if !s.is_finite() || s < 1.0 - eps || s > last + 1.0 + eps {
            return Err(Error::OutOfDomain {
                t,
                start: self.valid_start(),
                end: self.valid_end(),
            });
        }
        let i = s.floor().clamp(1.0, last);
        let u = (s - i).clamp(0.0, 1.0);
        Ok(Segment {
            first: i as usize - 1,
            u,
        })
    }
}

/// Continuous-time pose: rotation and position splines, possibly with
/// different knot spacings. Maps body coordinates to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rotation: SplineSO3,
    pub position: SplineR3,
}

impl Trajectory {
    pub fn new(rotation: SplineSO3, position: SplineR3) -> Result<Self> {
        let start = rotation.grid().valid_start().max(position.grid().valid_start());
        let end = rotation.grid().valid_end().min(position.grid().valid_end());
        if !(end > start) {
            return Err(Error::InvalidInput(format!(
                "rotation and position splines do not overlap ({start} .. {end})"
            )));
        }
        Ok(Trajectory { rotation, position })
    }

    pub fn valid_start(&self) -> f64 {
        self.rotation
            .grid()
            .valid_start()
            .max(self.position.grid().valid_start())
    }

    pub fn valid_end(&self) -> f64 {
        self.rotation
            .grid()
            .valid_end()
            .min(self.position.grid().valid_end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_cumulative_consistency() {
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            let b = basis(u);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(basis_d1(u).iter().sum::<f64>().abs() < 1e-12);
            assert!(basis_d2(u).iter().sum::<f64>().abs() < 1e-12);
            let c = cumulative_basis(u);
            assert!((c[0] - (b[1] + b[2] + b[3])).abs() < 1e-14);
            assert!((c[1] - (b[2] + b[3])).abs() < 1e-14);
            assert!((c[2] - b[3]).abs() < 1e-14);
            let d = basis_d1(u);
            let cd = cumulative_basis_d1(u);
            assert!((cd[0] - (d[1] + d[2] + d[3])).abs() < 1e-14);
            assert!((cd[1] - (d[2] + d[3])).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_covering_and_locate() {
        let g = KnotGrid::covering(0.0, 10.0, 0.05).unwrap();
        assert_eq!(g.count, 203);
        assert!(g.valid_start() <= 0.0 + 1e-12);
        assert!(g.valid_end() >= 10.0 - 1e-12);
        assert_eq!(g.locate(0.0).unwrap(), Segment { first: 0, u: 0.0 });
        let end = g.locate(10.0).unwrap();
        assert_eq!(end.first, g.count - 4);
        assert!((end.u - 1.0).abs() < 1e-6);
        assert!(matches!(g.locate(-0.01), Err(Error::OutOfDomain { .. })));
        assert!(matches!(g.locate(10.06), Err(Error::OutOfDomain { .. })));
    }
}
