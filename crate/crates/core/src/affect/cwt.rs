use num_complex::Complex64;
use rustfft::FftPlanner;

use super::AffectError;

pub const MIN_SIGNAL_LEN: usize = 64;
/// Wavelet support is cut where the Gaussian falls below e^-36.
const SUPPORT_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    /// Row per scale, column per sample.
    pub coefs: Vec<Vec<Complex64>>,
    pub scales: Vec<f64>,
    pub pseudo_freqs_hz: Vec<f64>,
}

impl Scalogram {
    pub fn magnitude(&self) -> Vec<Vec<f64>> {
        self.coefs.iter().map(|row| row.iter().map(|c| c.norm()).collect()).collect()
    }
}

/// `n` scales (in samples) whose pseudo-frequencies run log-evenly from `f_hi` down to `f_lo`.
pub fn log_scales(f_lo: f64, f_hi: f64, n: usize, f_c: f64, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let f = f_hi * (f_lo / f_hi).powf(frac);
            f_c * fs / f
        })
        .collect()
}

/// Complex Morlet `ψ(t) = (π f_b)^-1/2 · e^(i2π f_c t) · e^(-t²/f_b)`.
pub(crate) fn morlet(t: f64, f_c: f64, f_b: f64) -> Complex64 {
    let env = (std::f64::consts::PI * f_b).powf(-0.5) * (-t * t / f_b).exp();
    Complex64::from_polar(env, 2.0 * std::f64::consts::PI * f_c * t)
}

/// `W(a,b) = a^-1/2 · Σ x[n] ψ*((n−b)/a)`, evaluated as a convolution in the frequency domain.
pub fn cwt(signal: &[f64], f_c: f64, f_b: f64, scales: &[f64], fs: f64) -> Result<Scalogram, AffectError> {
    if signal.len() < MIN_SIGNAL_LEN {
        return Err(AffectError::SignalTooShort(signal.len()));
    }
    if !(f_c > 0.0 && f_b > 0.0 && fs > 0.0) || scales.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(AffectError::BadParameter("wavelet parameters and scales must be positive".into()));
    }
    let len = signal.len();
    let max_half = scales
        .iter()
        .map(|&a| (SUPPORT_SIGMAS * a * f_b.sqrt()).ceil() as usize)
        .max()
        .unwrap_or(0);
    let n = (len + 2 * max_half + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut x: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    x.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut x);

    let mut coefs = Vec::with_capacity(scales.len());
    for &a in scales {
        let half = (SUPPORT_SIGMAS * a * f_b.sqrt()).ceil() as i64;
        let norm = a.powf(-0.5);
        // h[j] = ψ*(−j/a)/√a, so W = x * h.
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for j in -half..=half {
            h[j.rem_euclid(n as i64) as usize] = morlet(-j as f64 / a, f_c, f_b).conj() * norm;
        }
        fwd.process(&mut h);
        for (hk, xk) in h.iter_mut().zip(&x) {
            *hk *= xk;
        }
        inv.process(&mut h);
        let scale = 1.0 / n as f64;
        coefs.push(h[..len].iter().map(|c| c * scale).collect());
    }
    Ok(Scalogram { coefs, scales: scales.to_vec(), pseudo_freqs_hz: scales.iter().map(|a| f_c * fs / a).collect() })
}
