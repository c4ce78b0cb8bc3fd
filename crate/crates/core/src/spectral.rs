//! Discrete Fourier analysis of uniformly sampled signals.
//!
//! All transforms use the unitary scaling: the inverse transform is the
//! matrix `M[k][n] = exp(+2πi kn/N) / √N` and the forward transform is its
//! adjoint, so `‖X‖² = ‖x‖²` holds exactly (up to rounding). No windowing or
//! zero padding is applied; spectral leakage from the implicit periodic
//! extension is accepted as an approximation.

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSignal {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

impl UniformSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::InvalidInput("start time must be finite".into()));
        }
        Ok(UniformSignal {
            samples,
            sample_rate,
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Magnitude of the frequency, in Hz, of bin `k` of an `n`-point transform.
/// Bins above n/2 mirror negative frequencies.
pub fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k % n;
    let folded = k.min(n - k);
    folded as f64 * sample_rate / n as f64
}

/// Complex DFT bins of a uniformly sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    sample_rate: f64,
}

impl Spectrum {
    pub fn new(bins: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if bins.len() < 2 {
            return Err(Error::InvalidInput("spectrum needs at least 2 bins".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(Spectrum { bins, sample_rate })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        bin_frequency(k, self.bins.len(), self.sample_rate)
    }
}

/// One nonnegative magnitude per frequency bin; DC is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSpectrum {
    magnitudes: Vec<f64>,
    sample_rate: f64,
}

impl ScalarSpectrum {
    /// Builds a scalar spectrum, forcing the DC bin to zero.
    pub fn new(mut magnitudes: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if magnitudes.len() < 2 {
            return Err(Error::InvalidInput("spectrum needs at least 2 bins".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(bad) = magnitudes.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidInput(format!(
                "magnitudes must be finite and nonnegative, found {bad}"
            )));
        }
        magnitudes[0] = 0.0;
        Ok(ScalarSpectrum {
            magnitudes,
            sample_rate,
        })
    }

    /// Magnitudes of the DFT of a scalar signal, DC zeroed.
    pub fn from_signal(signal: &UniformSignal) -> Self {
        let spec = dft(signal);
        let magnitudes = spec.bins.iter().map(|c| c.norm()).collect();
        ScalarSpectrum::new(magnitudes, signal.sample_rate).expect("validated signal")
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        bin_frequency(k, self.magnitudes.len(), self.sample_rate)
    }
}

/// Sum of squared magnitudes.
pub trait Energy {
    fn energy(&self) -> f64;
}

impl Energy for Spectrum {
    fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

impl Energy for ScalarSpectrum {
    fn energy(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }
}

pub fn energy<S: Energy + ?Sized>(spectrum: &S) -> f64 {
    spectrum.energy()
}

fn transform(mut buf: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
    let n = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Forward unitary DFT.
pub fn dft(signal: &UniformSignal) -> Spectrum {
    let buf = signal
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    Spectrum {
        bins: transform(buf, false),
        sample_rate: signal.sample_rate,
    }
}

/// Inverse unitary DFT; the imaginary part is discarded (it is rounding
/// noise for conjugate-symmetric spectra).
pub fn idft(spectrum: &Spectrum) -> UniformSignal {
    let out = transform(spectrum.bins.clone(), true);
    UniformSignal {
        samples: out.iter().map(|c| c.re).collect(),
        sample_rate: spectrum.sample_rate,
        start_time: 0.0,
    }
}

/// Complex inverse transform, for callers that need the imaginary residue.
pub fn idft_complex(spectrum: &Spectrum) -> Vec<Complex64> {
    transform(spectrum.bins.clone(), true)
}

/// Collapses a 3-axis signal into one magnitude per bin:
/// `√(1/3)·‖(Ωx, Ωy, Ωz)‖`, with DC set to zero.
pub fn vector_spectrum(samples: &[Vector3<f64>], sample_rate: f64) -> Result<ScalarSpectrum> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "vector signal needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidInput(format!("sample {i} is not finite")));
    }
    let n = samples.len();
    let mut power = vec![0.0; n];
    for axis in 0..3 {
        let buf = samples.iter().map(|v| Complex64::new(v[axis], 0.0)).collect();
        for (p, c) in power.iter_mut().zip(transform(buf, false)) {
            *p += c.norm_sqr();
        }
    }
    let magnitudes = power.into_iter().map(|p| (p / 3.0).sqrt()).collect();
    ScalarSpectrum::new(magnitudes, sample_rate)
}

/// Low-pass filters with a zero-phase moving average of width
/// `in_rate / out_rate` and keeps every ratio-th sample, starting at the first.
///
/// Even widths use `width + 1` taps with half weight on the two end taps so
/// the kernel stays symmetric. Near the ends the kernel is truncated and
/// renormalized.
pub fn decimate(samples: &[f64], in_rate: f64, out_rate: f64) -> Result<Vec<f64>> {
    if !(in_rate > 0.0 && out_rate > 0.0 && in_rate.is_finite() && out_rate.is_finite()) {
        return Err(Error::InvalidInput("rates must be positive".into()));
    }
    let ratio_f = in_rate / out_rate;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 * ratio_f {
        return Err(Error::InvalidInput(format!(
            "output rate {out_rate} Hz does not divide input rate {in_rate} Hz"
        )));
    }
    let ratio = ratio as usize;
    if ratio == 1 {
        return Ok(samples.to_vec());
    }
    let half = ratio / 2;
    let kernel: Vec<f64> = if ratio % 2 == 1 {
        vec![1.0; ratio]
    } else {
        let mut k = vec![1.0; ratio + 1];
        k[0] = 0.5;
        k[ratio] = 0.5;
        k
    };
    let n = samples.len();
    let out = (0..n)
        .step_by(ratio)
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, w) in kernel.iter().enumerate() {
                let idx = i as isize + j as isize - half as isize;
                if idx >= 0 && (idx as usize) < n {
                    acc += w * samples[idx as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(N²) transform straight from the matrix definition.
    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        Complex64::new(a.cos(), a.sin()) * v
                    })
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    fn random_signal(n: usize, seed: u64) -> UniformSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        UniformSignal::new(s, 100.0, 0.0).unwrap()
    }

    #[test]
    fn fast_transform_matches_matrix_definition() {
        let x = random_signal(37, 1);
        let fast = dft(&x);
        let slow = naive_dft(x.samples());
        for (a, b) in fast.bins().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let x = UniformSignal::new(vec![3.0; 4], 1.0, 0.0).unwrap();
        let s = dft(&x);
        assert!((s.bins()[0].re - 6.0).abs() < 1e-12);
        for b in &s.bins()[1..] {
            assert!(b.norm() < 1e-12);
        }
    }

    #[test]
    fn pure_cosine_has_two_bins() {
        let n = 64;
        let k0 = 5;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * (k0 * t) as f64 / n as f64).cos())
            .collect();
        let s = dft(&UniformSignal::new(x, 64.0, 0.0).unwrap());
        for (k, b) in s.bins().iter().enumerate() {
            if k == k0 || k == n - k0 {
                assert!((b.norm() - (n as f64).sqrt() / 2.0).abs() < 1e-10);
            } else {
                assert!(b.norm() < 1e-10, "bin {k} = {b}");
            }
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let x = random_signal(256, 3);
        let s = dft(&x);
        let e = x.energy();
        assert!((s.energy() - e).abs() <= 1e-9 * e);
        let back = idft(&s);
        for (a, b) in back.samples().iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_has_unit_energy() {
        let mut v = vec![0.0; 17];
        v[4] = 1.0;
        let s = dft(&UniformSignal::new(v, 1.0, 0.0).unwrap());
        assert!((energy(&s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idft_edge_cases() {
        let zero = Spectrum::new(vec![Complex64::new(0.0, 0.0); 8], 10.0).unwrap();
        assert!(idft(&zero).samples().iter().all(|v| *v == 0.0));
        let n = 9usize;
        let c = 2.5;
        let mut bins = vec![Complex64::new(0.0, 0.0); n];
        bins[0] = Complex64::new((n as f64).sqrt() * c, 0.0);
        let x = idft(&Spectrum::new(bins, 10.0).unwrap());
        assert!(x.samples().iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn too_short_signal_is_rejected() {
        assert!(UniformSignal::new(vec![1.0], 10.0, 0.0).is_err());
        assert!(UniformSignal::new(vec![1.0, 2.0], 0.0, 0.0).is_err());
        assert!(UniformSignal::new(vec![1.0, 2.0], f64::NAN, 0.0).is_err());
    }

    #[test]
    fn vector_spectrum_cases() {
        let zeros = vec![Vector3::zeros(); 10];
        let s = vector_spectrum(&zeros, 10.0).unwrap();
        assert!(s.magnitudes().iter().all(|m| *m == 0.0));

        let constant = vec![Vector3::new(1.0, -2.0, 3.0); 10];
        let s = vector_spectrum(&constant, 10.0).unwrap();
        assert!(s.magnitudes().iter().all(|m| m.abs() < 1e-12));

        let x = random_signal(50, 9);
        let same: Vec<_> = x.samples().iter().map(|&v| Vector3::new(v, v, v)).collect();
        let s = vector_spectrum(&same, 100.0).unwrap();
        let scalar = dft(&x);
        assert_eq!(s.magnitudes()[0], 0.0);
        for k in 1..50 {
            assert!((s.magnitudes()[k] - scalar.bins()[k].norm()).abs() < 1e-12);
        }

        let bad = vec![Vector3::new(f64::NAN, 0.0, 0.0), Vector3::zeros()];
        assert!(vector_spectrum(&bad, 1.0).is_err());
    }

    #[test]
    fn decimate_lengths_and_constants() {
        let c = vec![2.0; 1000];
        let d = decimate(&c, 1000.0, 250.0).unwrap();
        assert_eq!(d.len(), 250);
        assert!(d.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert_eq!(decimate(&vec![0.0; 999], 300.0, 100.0).unwrap().len(), 333);
        assert!(decimate(&c, 1000.0, 300.0).is_err());
    }

    #[test]
    fn decimate_removes_nyquist_tone() {
        // Width-4 kernel [.5, 1, 1, 1, .5]/4 on an alternating sequence:
        // (0.5 - 1 + 1 - 1 + 0.5)/4 = 0 away from the ends.
        let x: Vec<f64> = (0..1000).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = decimate(&x, 1000.0, 250.0).unwrap();
        let e_in: f64 = x.iter().map(|v| v * v).sum();
        let e_out: f64 = d.iter().map(|v| v * v).sum();
        assert!(e_out < 0.05 * e_in, "{e_out} vs {e_in}");
    }
}
