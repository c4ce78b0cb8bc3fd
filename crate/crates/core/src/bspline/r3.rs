use nalgebra::SVector;

use super::{basis, basis_d1, basis_d2, KnotGrid, Segment};
use crate::error::{Error, Result};

/// Uniform cubic B-spline with `D`-dimensional control points.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSpline<const D: usize> {
    grid: KnotGrid,
    control_points: Vec<SVector<f64, D>>,
}

pub type SplineR3 = UniformSpline<3>;
pub type SplineR1 = UniformSpline<1>;

impl<const D: usize> UniformSpline<D> {
    pub fn new(t0: f64, knot_spacing: f64, control_points: Vec<SVector<f64, D>>) -> Result<Self> {
        let grid = KnotGrid::new(t0, knot_spacing, control_points.len())?;
        Ok(UniformSpline {
            grid,
            control_points,
        })
    }

    pub fn constant(grid: KnotGrid, value: SVector<f64, D>) -> Self {
        UniformSpline {
            grid,
            control_points: vec![value; grid.count],
        }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn knot_spacing(&self) -> f64 {
        self.grid.dt
    }

    pub fn control_points(&self) -> &[SVector<f64, D>] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [SVector<f64, D>] {
        &mut self.control_points
    }

    pub fn locate(&self, t: f64) -> Result<Segment> {
        self.grid.locate(t)
    }

    /// Value (order 0) or time derivative (order 1, 2) at `t`.
    pub fn eval(&self, t: f64, derivative_order: u8) -> Result<SVector<f64, D>> {
        let seg = self.grid.locate(t)?;
        let (w, scale) = match derivative_order {
            0 => (basis(seg.u), 1.0),
            1 => (basis_d1(seg.u), 1.0 / self.grid.dt),
            2 => (basis_d2(seg.u), 1.0 / (self.grid.dt * self.grid.dt)),
            o => {
                return Err(Error::InvalidInput(format!(
                    "derivative order {o} not supported (0, 1 or 2)"
                )))
            }
        };
        let mut out = SVector::<f64, D>::zeros();
        for (j, wj) in w.iter().enumerate() {
            out += self.control_points[seg.first + j] * *wj;
        }
        Ok(out * scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spline(rng: &mut ChaCha8Rng) -> SplineR3 {
        let dt = rng.random_range(0.05..0.5);
        let n = rng.random_range(5..12);
        let cps = (0..n)
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        SplineR3::new(rng.random_range(-1.0..1.0), dt, cps).unwrap()
    }

    #[test]
    fn constant_reproduction() {
        let c = Vector3::new(1.0, -2.0, 0.5);
        let s = SplineR3::new(0.0, 0.1, vec![c; 6]).unwrap();
        for t in [0.1, 0.23, 0.4] {
            assert!((s.eval(t, 0).unwrap() - c).norm() < 1e-12);
            assert!(s.eval(t, 1).unwrap().norm() < 1e-12);
            assert!(s.eval(t, 2).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn linear_precision() {
        let a = Vector3::new(0.3, 1.0, -1.0);
        let b = Vector3::new(2.0, -0.5, 0.25);
        let dt = 0.2;
        let t0 = -0.2;
        let cps = (0..8).map(|k| a + b * (t0 + k as f64 * dt)).collect();
        let s = SplineR3::new(t0, dt, cps).unwrap();
        for i in 0..20 {
            let t = s.grid().valid_start() + i as f64 * 0.05;
            assert!((s.eval(t, 0).unwrap() - (a + b * t)).norm() < 1e-12);
            assert!((s.eval(t, 1).unwrap() - b).norm() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = random_spline(&mut rng);
            let g = *s.grid();
            let h = 1e-5 * g.dt;
            let t = rng.random_range(g.valid_start() + h..g.valid_end() - h);
            for order in 1..=2u8 {
                let analytic = s.eval(t, order).unwrap();
                let numeric = (s.eval(t + h, order - 1).unwrap() - s.eval(t - h, order - 1).unwrap()) / (2.0 * h);
                let scale = analytic.norm().max(1.0);
                assert!((analytic - numeric).norm() <= 1e-5 * scale, "order {order}");
            }
        }
    }

    #[test]
    fn out_of_domain() {
        let s = SplineR3::new(0.0, 0.1, vec![Vector3::zeros(); 5]).unwrap();
        assert!(s.eval(0.05, 0).is_err());
        assert!(s.eval(0.31, 0).is_err());
        assert!(s.eval(0.1, 3).is_err());
        assert!(SplineR3::new(0.0, 0.1, vec![Vector3::zeros(); 3]).is_err());
    }
}
