use nalgebra::{Matrix3x2, SMatrix, SVector, Vector3};

use crate::bspline::Trajectory;

/// Where a control point's tangent coordinates live in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Fixed,
    /// Three coordinates starting at the offset.
    Full(usize),
    /// Two coordinates along the gauge basis (rotation about gravity fixed).
    Tilt(usize),
}

/// Parameter ordering for the trajectory system.
///
/// Control points of both splines are interleaved by knot time so every
/// residual touches a contiguous-ish window, keeping the normal equations
/// narrow. Biases come last. Landmarks are eliminated and never appear here.
#[derive(Debug, Clone)]
pub struct Layout {
    pub rotation: Vec<Slot>,
    pub position: Vec<Slot>,
    pub bias: Option<usize>,
    pub tilt_basis: Matrix3x2<f64>,
    pub dim: usize,
}

impl Layout {
    pub fn new(traj: &Trajectory, gravity: &Vector3<f64>, estimate_biases: bool) -> Self {
        let rg = traj.rotation.grid();
        let pg = traj.position.grid();
        let mut order: Vec<(f64, bool, usize)> = (0..rg.count)
            .map(|k| (rg.knot_time(k), true, k))
            .chain((0..pg.count).map(|k| (pg.knot_time(k), false, k)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut rotation = vec![Slot::Fixed; rg.count];
        let mut position = vec![Slot::Fixed; pg.count];
        let mut dim = 0;
        for (_, is_rot, k) in order {
            if is_rot {
                rotation[k] = if k == 0 {
                    dim += 2;
                    Slot::Tilt(dim - 2)
                } else {
                    dim += 3;
                    Slot::Full(dim - 3)
                };
            } else if k > 0 {
                position[k] = Slot::Full(dim);
                dim += 3;
            }
        }
        let bias = estimate_biases.then(|| {
            dim += 6;
            dim - 6
        });
        Layout {
            rotation,
            position,
            bias,
            tilt_basis: tilt_basis(gravity),
            dim,
        }
    }

    /// Adds the columns of a D×3 Jacobian with respect to rotation control
    /// point `k` (world-frame perturbation).
    pub fn push_rotation<const D: usize>(
        &self,
        cols: &mut Vec<(usize, SVector<f64, D>)>,
        k: usize,
        m: &SMatrix<f64, D, 3>,
    ) {
        match self.rotation[k] {
            Slot::Fixed => {}
            Slot::Full(o) => {
                for a in 0..3 {
                    cols.push((o + a, m.column(a).into_owned()));
                }
            }
            Slot::Tilt(o) => {
                for a in 0..2 {
                    cols.push((o + a, m * self.tilt_basis.column(a)));
                }
            }
        }
    }

    /// Adds `scale · m` for position control point `k`.
    pub fn push_position<const D: usize>(
        &self,
        cols: &mut Vec<(usize, SVector<f64, D>)>,
        k: usize,
        m: &SMatrix<f64, D, 3>,
    ) {
        if let Slot::Full(o) = self.position[k] {
            for a in 0..3 {
                cols.push((o + a, m.column(a).into_owned()));
            }
        }
    }

    /// Rotation perturbation of control point `k` encoded in `step`.
    pub fn rotation_step(&self, k: usize, step: &[f64]) -> Option<Vector3<f64>> {
        match self.rotation[k] {
            Slot::Fixed => None,
            Slot::Full(o) => Some(Vector3::new(step[o], step[o + 1], step[o + 2])),
            Slot::Tilt(o) => Some(self.tilt_basis * nalgebra::Vector2::new(step[o], step[o + 1])),
        }
    }

    pub fn position_step(&self, k: usize, step: &[f64]) -> Option<Vector3<f64>> {
        match self.position[k] {
            Slot::Full(o) => Some(Vector3::new(step[o], step[o + 1], step[o + 2])),
            _ => None,
        }
    }

    /// Smallest parameter index touched by control points `first..first+4`
    /// of each spline, used to build the skyline profile.
    pub fn indices_rotation(&self, first: usize) -> impl Iterator<Item = usize> + '_ {
        (first..first + 4).flat_map(move |k| slot_indices(self.rotation[k]))
    }

    pub fn indices_position(&self, first: usize) -> impl Iterator<Item = usize> + '_ {
        (first..first + 4).flat_map(move |k| slot_indices(self.position[k]))
    }

    pub fn indices_bias(&self) -> impl Iterator<Item = usize> {
        self.bias.into_iter().flat_map(|o| o..o + 6)
    }
}

fn slot_indices(s: Slot) -> std::ops::Range<usize> {
    match s {
        Slot::Fixed => 0..0,
        Slot::Full(o) => o..o + 3,
        Slot::Tilt(o) => o..o + 2,
    }
}

/// Orthonormal basis of the plane perpendicular to gravity.
pub fn tilt_basis(gravity: &Vector3<f64>) -> Matrix3x2<f64> {
    let g = gravity.normalize();
    let helper = if g.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = (helper - g * g.dot(&helper)).normalize();
    let b = g.cross(&a);
    Matrix3x2::from_columns(&[a, b])
}

/// Sparse Jacobian row block of a residual with D components.
#[derive(Debug, Clone)]
pub struct Block<const D: usize> {
    pub residual: SVector<f64, D>,
    pub cols: Vec<(usize, SVector<f64, D>)>,
}

impl<const D: usize> Block<D> {
    /// Sorts columns and merges duplicates (a control point seen at two times).
    pub fn compact(&mut self) {
        self.cols.sort_unstable_by_key(|c| c.0);
        let mut out: Vec<(usize, SVector<f64, D>)> = Vec::with_capacity(self.cols.len());
        for (i, v) in self.cols.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        self.cols = out;
    }
}
