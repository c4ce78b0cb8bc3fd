//! Spline error weighting.
//!
//! A least-squares spline fit with knot spacing Δt acts on a signal as a
//! low-pass filter with response `H(f·Δt)`. Given the spectrum `X` of a
//! measurement stream this module
//!
//! * scores a knot spacing by the fraction of signal energy it keeps,
//!   `q(Δt) = ε(H·X) / ε(X)`,
//! * picks the largest Δt that reaches a requested quality `q̂`,
//! * predicts the residual variance of the fit as the sum of the
//!   approximation error `ε((1 − H)·X)/N` and the part of the white
//!   measurement noise the spline keeps, `σ_n² ε(H)/N`,
//! * and turns that variance into the residual weight `γ = 1/σ̂_r²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Energy, ScalarSpectrum};

/// Frequency response of least-squares (orthogonal projection) fitting with
/// a uniform B-spline of degree `spline_order`.
///
/// `H(ν) = b(ν)² / Σ_k b(ν + k)²` with `b(ν) = sinc(ν)^(n+1)` and ν = f·Δt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyResponseModel {
    pub spline_order: u32,
}

impl Default for FrequencyResponseModel {
    fn default() -> Self {
        FrequencyResponseModel { spline_order: 3 }
    }
}

impl FrequencyResponseModel {
    pub fn cubic() -> Self {
        Self::default()
    }

    pub fn new(spline_order: u32) -> Self {
        FrequencyResponseModel { spline_order }
    }

    /// H at normalized frequency ν = f·Δt.
    pub fn response(&self, nu: f64) -> f64 {
        frequency_response(self, nu)
    }
}

/// Evaluates the least-squares spline response.
///
/// With `ν = m + f`, `m` integer and `|f| ≤ 1/2`, the sines cancel and
/// `H(ν) = ν^(-p) / Σ_k (f + k)^(-p)`, `p = 2(n + 1)`. The denominator is
/// 1-periodic. It is summed over |k| ≤ K and the tail is replaced by its
/// midpoint-rule integral. For n = 3 (p = 8) and K = 20 the omitted tail is
/// below 2·20.5⁻⁷/7 ≈ 2.2e-10 absolute against a sum ≥ 2·0.5⁻⁸ = 512 at
/// its smallest, i.e. under 1e-12 relative even before the correction.
pub fn frequency_response(model: &FrequencyResponseModel, nu: f64) -> f64 {
    if !nu.is_finite() {
        return 0.0;
    }
    let nu = nu.abs();
    let m = nu.round();
    let f = nu - m;
    if f == 0.0 {
        return if m == 0.0 { 1.0 } else { 0.0 };
    }
    let p = 2 * (model.spline_order as i32 + 1);
    let denom = if model.spline_order == 0 {
        // Σ_k (f+k)^-2 = π² / sin²(πf)
        let s = (std::f64::consts::PI * f).sin();
        std::f64::consts::PI.powi(2) / (s * s) * f.powi(2)
    } else {
        let cutoff: i32 = match model.spline_order {
            1 => 200,
            2 => 60,
            _ => 20,
        };
        // scaled by f^p so the k = 0 term is exactly 1
        let mut sum = 1.0;
        for k in 1..=cutoff {
            let kf = k as f64;
            sum += (f / (f + kf)).powi(p) + (f / (f - kf)).powi(p);
        }
        let tail = |a: f64| f.powi(p) * a.powi(1 - p) / (p - 1) as f64;
        let edge = cutoff as f64 + 0.5;
        sum + tail(edge + f) + tail(edge - f)
    };
    // H = ν^-p / (f^-p · denom)
    let ratio = f / nu;
    ratio.powi(p) / denom
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "knot spacing must be positive and finite, got {dt}"
        )))
    }
}

/// Per-bin responses `H(f_k·Δt)` for every bin of `spectrum`.
pub fn response_bins(spectrum: &ScalarSpectrum, dt: f64, model: &FrequencyResponseModel) -> Vec<f64> {
    (0..spectrum.len())
        .map(|k| model.response(spectrum.bin_frequency(k) * dt))
        .collect()
}

/// Fraction of spectral energy kept by a fit with knot spacing `dt`.
pub fn quality(spectrum: &ScalarSpectrum, dt: f64, model: &FrequencyResponseModel) -> Result<f64> {
    check_dt(dt)?;
    let total = spectrum.energy();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "quality is undefined for a zero-energy spectrum".into(),
        ));
    }
    let kept: f64 = spectrum
        .magnitudes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let h = model.response(spectrum.bin_frequency(k) * dt);
            h * h * m * m
        })
        .sum();
    Ok((kept / total).clamp(0.0, 1.0))
}

/// Bracketing root finder (Brent 1973: bisection, secant and inverse
/// quadratic interpolation). Stops when `|f(x)| ≤ tol` or the bracket is
/// narrower than `tol`.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_ITER: usize = 200;
    if !(a < b) {
        return Err(Error::InvalidInput(format!("bracket [{a}, {b}] is empty")));
    }
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoBracket { a, b, fa, fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= tol || xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}

/// Outcome of a knot-spacing search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotSelection {
    pub dt: f64,
    /// q(dt) at the returned spacing.
    pub quality: f64,
    /// The requested quality was not reachable at the minimum spacing.
    pub saturated: bool,
}

/// Largest knot spacing (approximately) with `q(Δt) ≥ q̂`.
///
/// Starts at `dt_max` and halves until the quality is met, then refines the
/// crossing inside the last bracket with [`brent_root`]. Spacings below two
/// sample periods are never returned; if even that spacing misses `q̂` the
/// result is flagged as saturated.
pub fn select_knot_spacing(
    spectrum: &ScalarSpectrum,
    q_hat: f64,
    dt_max: f64,
    model: &FrequencyResponseModel,
) -> Result<KnotSelection> {
    if !(q_hat > 0.0 && q_hat <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "requested quality must be in (0, 1], got {q_hat}"
        )));
    }
    let dt_min = 2.0 / spectrum.sample_rate();
    if !(dt_max >= dt_min) {
        return Err(Error::InvalidInput(format!(
            "dt_max {dt_max} s is below the minimum spacing {dt_min} s"
        )));
    }
    let q = |dt: f64| quality(spectrum, dt, model);
    let q_max = q(dt_max)?;
    if q_max >= q_hat {
        return Ok(KnotSelection {
            dt: dt_max,
            quality: q_max,
            saturated: false,
        });
    }
    let mut hi = dt_max;
    let lo = loop {
        let next = (0.5 * hi).max(dt_min);
        let q_next = q(next)?;
        if q_next >= q_hat {
            break next;
        }
        if next <= dt_min {
            log::warn!(
                "requested quality {q_hat} unreachable: q(dt_min = {dt_min:.5} s) = {q_next:.6}"
            );
            return Ok(KnotSelection {
                dt: dt_min,
                quality: q_next,
                saturated: true,
            });
        }
        hi = next;
    };
    let dt = brent_root(|dt| q(dt).unwrap_or(0.0) - q_hat, lo, hi, 1e-9 * hi)?;
    Ok(KnotSelection {
        dt,
        quality: q(dt)?,
        saturated: false,
    })
}

/// Predicted residual statistics of a spline fit for one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPrediction {
    /// Approximation-error variance σ̂_e².
    pub sigma_e2: f64,
    /// Retained (filtered) noise variance σ̂_f².
    pub sigma_f2: f64,
    /// σ̂_r² = σ̂_e² + σ̂_f².
    pub sigma_r2: f64,
    /// γ = 1/σ̂_r².
    pub gamma: f64,
}

impl ResidualPrediction {
    pub fn sigma_r(&self) -> f64 {
        self.sigma_r2.sqrt()
    }

    /// The same prediction with its weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ResidualPrediction {
            gamma: self.gamma * factor,
            ..*self
        }
    }
}

pub fn predict_residual_variance(
    spectrum: &ScalarSpectrum,
    dt: f64,
    sigma_n: f64,
    model: &FrequencyResponseModel,
) -> Result<ResidualPrediction> {
    check_dt(dt)?;
    if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise std must be nonnegative, got {sigma_n}"
        )));
    }
    let n = spectrum.len() as f64;
    let (mut err, mut kept) = (0.0, 0.0);
    for (k, m) in spectrum.magnitudes().iter().enumerate() {
        let h = model.response(spectrum.bin_frequency(k) * dt);
        err += (1.0 - h).powi(2) * m * m;
        kept += h * h;
    }
    let sigma_e2 = err / n;
    let sigma_f2 = sigma_n * sigma_n * kept / n;
    let sigma_r2 = sigma_e2 + sigma_f2;
    if !(sigma_r2 > 0.0) {
        return Err(Error::DegenerateWeight);
    }
    Ok(ResidualPrediction {
        sigma_e2,
        sigma_f2,
        sigma_r2,
        gamma: 1.0 / sigma_r2,
    })
}

/// Response models used for the two IMU modalities.
///
/// Gyroscope readings are the first derivative of the rotation spline and
/// accelerometer readings the second derivative of the position spline, so
/// their fitted signals live in degree-2 and degree-1 spline spaces on the
/// same knot spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImuResponseModels {
    pub gyro: FrequencyResponseModel,
    pub accel: FrequencyResponseModel,
}

impl Default for ImuResponseModels {
    fn default() -> Self {
        ImuResponseModels {
            gyro: FrequencyResponseModel::new(2),
            accel: FrequencyResponseModel::new(1),
        }
    }
}

/// Knot spacings and residual weights for the two trajectory splines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualWeightPlan {
    pub dt_so3: f64,
    pub dt_r3: f64,
    pub gyro: ResidualPrediction,
    pub accel: ResidualPrediction,
    pub requested_quality: (f64, f64),
    pub gyro_selection: KnotSelection,
    pub accel_selection: KnotSelection,
    pub warnings: Vec<String>,
}

/// Inputs for [`weights_from_quality`].
#[derive(Debug, Clone, Copy)]
pub struct WeightRequest {
    pub q_gyro: f64,
    pub q_accel: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub dt_max: f64,
    pub models: ImuResponseModels,
}

/// Chooses the rotation knot spacing from the gyroscope spectrum and the
/// position knot spacing from the accelerometer spectrum, then predicts
/// each modality's residual variance at its spacing.
pub fn weights_from_quality(
    gyro_spec: &ScalarSpectrum,
    accel_spec: &ScalarSpectrum,
    req: &WeightRequest,
) -> Result<ResidualWeightPlan> {
    let gyro_sel = select_knot_spacing(gyro_spec, req.q_gyro, req.dt_max, &req.models.gyro)?;
    let accel_sel = select_knot_spacing(accel_spec, req.q_accel, req.dt_max, &req.models.accel)?;
    let mut warnings = Vec::new();
    for (name, sel, q) in [("gyro", &gyro_sel, req.q_gyro), ("accel", &accel_sel, req.q_accel)] {
        if sel.saturated {
            warnings.push(format!(
                "{name}: requested quality {q} unreachable, knot spacing saturated at {:.6} s (q = {:.6})",
                sel.dt, sel.quality
            ));
        }
    }
    let gyro = predict_residual_variance(gyro_spec, gyro_sel.dt, req.sigma_gyro, &req.models.gyro)?;
    let accel =
        predict_residual_variance(accel_spec, accel_sel.dt, req.sigma_accel, &req.models.accel)?;
    Ok(ResidualWeightPlan {
        dt_so3: gyro_sel.dt,
        dt_r3: accel_sel.dt,
        gyro,
        accel,
        requested_quality: (req.q_gyro, req.q_accel),
        gyro_selection: gyro_sel,
        accel_selection: accel_sel,
        warnings,
    })
}
