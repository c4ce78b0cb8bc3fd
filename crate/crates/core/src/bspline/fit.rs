use nalgebra::SVector;

use super::{basis, KnotGrid, SplineR1};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::spectral::UniformSignal;

/// Result of a least-squares spline fit.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub spline: SplineR1,
    /// x(t) − x̂(t) at every sample.
    pub residuals: Vec<f64>,
    /// max |Bᵀr| / (‖B‖·‖x‖)-style relative normal-equation residual.
    pub normal_residual: f64,
}

impl LeastSquaresFit {
    pub fn residual_std(&self) -> f64 {
        let n = self.residuals.len() as f64;
        let mean = self.residuals.iter().sum::<f64>() / n;
        (self.residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Least-squares uniform cubic spline through a sampled signal.
///
/// Knots are placed so the first sample lies at the start of the valid
/// interval. The normal equations have bandwidth 7 and are solved directly.
pub fn fit_least_squares_1d(signal: &UniformSignal, knot_spacing: f64) -> Result<LeastSquaresFit> {
    let t_first = signal.start_time();
    let t_last = signal.time(signal.len() - 1);
    if !(knot_spacing > 0.0 && knot_spacing.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "knot spacing must be positive, got {knot_spacing}"
        )));
    }
    if t_last - t_first < 4.0 * knot_spacing - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "signal span {:.4} s covers fewer than 4 knot intervals of {knot_spacing} s",
            t_last - t_first
        )));
    }
    let grid = KnotGrid::covering(t_first, t_last, knot_spacing)?;
    let k = grid.count;
    let mut normal = SymmetricMatrix::zeros(k);
    let mut rhs = vec![0.0; k];
    let mut counts = vec![0usize; k - 3];
    let mut located = Vec::with_capacity(signal.len());
    for (i, &x) in signal.samples().iter().enumerate() {
        let seg = grid.locate(signal.time(i))?;
        let w = basis(seg.u);
        counts[seg.first] += 1;
        for a in 0..4 {
            rhs[seg.first + a] += w[a] * x;
            for b in 0..=a {
                normal.add(seg.first + a, seg.first + b, w[a] * w[b]);
            }
        }
        located.push((seg.first, w));
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyKnotInterval {
            interval: empty,
            start: grid.knot_time(empty + 1),
            end: grid.knot_time(empty + 2),
        });
    }
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Fit("normal equations are rank deficient".into()))?;
    let theta = chol.solve(&rhs);

    let residuals: Vec<f64> = signal
        .samples()
        .iter()
        .zip(&located)
        .map(|(&x, (first, w))| x - (0..4).map(|a| w[a] * theta[first + a]).sum::<f64>())
        .collect();
    let mut grad = vec![0.0; k];
    for (r, (first, w)) in residuals.iter().zip(&located) {
        for a in 0..4 {
            grad[first + a] += w[a] * r;
        }
    }
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let normal_residual = grad.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;

    let control = theta.into_iter().map(|v| SVector::<f64, 1>::new(v)).collect();
    Ok(LeastSquaresFit {
        spline: SplineR1::new(grid.t0, grid.dt, control)?,
        residuals,
        normal_residual,
    })
}
