use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AudioClip, AudioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => hann_window(len),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

/// Periodic Hann window, which overlap-adds to a constant at hop = len / 4.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Squared STFT magnitudes over the one-sided spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `frames × bins` row-major, `bins = fft_len / 2 + 1`.
    pub magnitudes_sq: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub window_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
    pub sample_rate: u32,
    pub bin_hz: f64,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes_sq[t * self.bins..(t + 1) * self.bins]
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_hz
    }

    /// Start time of frame `t` in seconds.
    pub fn frame_time(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate as f64
    }

    /// Energy of frame `t` over the full two-sided spectrum, scaled by `1/N` so
    /// that it equals the windowed frame's time-domain energy.
    pub fn frame_energy(&self, t: usize) -> f64 {
        let row = self.frame(t);
        let n = self.window_len;
        let last = row.len() - 1;
        let mut sum = row[0];
        for (k, v) in row.iter().enumerate().skip(1) {
            // DC and Nyquist appear once in the two-sided spectrum.
            sum += if k == last && n % 2 == 0 { *v } else { 2.0 * v };
        }
        sum / n as f64
    }
}

/// Complex STFT frames alongside the spectrogram.
#[derive(Debug, Clone)]
pub struct StftFrames {
    /// `frames × bins` row-major.
    pub values: Vec<Complex64>,
    pub spectrogram: Spectrogram,
}

/// Frame `t`, bin `k` holds `Σ_n x[n]·w[n − t·hop]·e^(−j2πkn/N)` with `n` the
/// absolute sample index.
pub fn stft(
    clip: &AudioClip,
    window_len: usize,
    hop: usize,
    window_kind: WindowKind,
) -> Result<StftFrames, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    if window_len == 0 || hop == 0 {
        return Err(AudioError::BadParameters("window and hop must be positive"));
    }
    if window_len > clip.len() {
        return Err(AudioError::WindowTooLong {
            window: window_len,
            len: clip.len(),
        });
    }
    let window = window_kind.coefficients(window_len);
    let frames = (clip.len() - window_len) / hop + 1;
    let bins = window_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);

    let mut values = Vec::with_capacity(frames * bins);
    let mut power = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(clip.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(bins).enumerate() {
            // Shift the phase reference from the frame start to sample zero.
            let phase = -2.0 * std::f64::consts::PI * ((k * start) % window_len) as f64
                / window_len as f64;
            let value = v * Complex64::from_polar(1.0, phase);
            power.push(value.norm_sqr());
            values.push(value);
        }
    }
    let spectrogram = Spectrogram {
        magnitudes_sq: power,
        frames,
        bins,
        window_len,
        hop,
        window_kind,
        sample_rate: clip.sample_rate,
        bin_hz: clip.sample_rate as f64 / window_len as f64,
    };
    Ok(StftFrames {
        values,
        spectrogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, secs: f64, sr: u32) -> AudioClip {
        let n = (secs * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip::new(samples, sr).unwrap()
    }

    fn argmax(row: &[f64]) -> usize {
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn zero_clip_gives_zero_spectrogram() {
        let clip = AudioClip::silence(0.5, 48_000);
        let s = stft(&clip, 4096, 1024, WindowKind::Hann).unwrap().spectrogram;
        assert!(s.magnitudes_sq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c6_sine_peaks_at_bin_89() {
        let clip = sine(1046.5, 1.0, 48_000);
        let s = stft(&clip, 4096, 1024, WindowKind::Hann).unwrap().spectrogram;
        assert!((s.bin_hz - 48_000.0 / 4096.0).abs() < 1e-12);
        for t in 1..s.frames - 1 {
            assert_eq!(argmax(s.frame(t)), 89, "frame {t}");
        }
    }

    #[test]
    fn two_sines_give_two_local_maxima() {
        let a = sine(1046.5, 1.0, 48_000);
        let b = sine(1567.98, 1.0, 48_000);
        let samples = a.samples.iter().zip(&b.samples).map(|(x, y)| 0.5 * (x + y)).collect();
        let clip = AudioClip::new(samples, 48_000).unwrap();
        let s = stft(&clip, 4096, 1024, WindowKind::Hann).unwrap().spectrogram;
        let row = s.frame(s.frames / 2);
        let peaks: Vec<usize> = (1..row.len() - 1)
            .filter(|&k| row[k] > row[k - 1] && row[k] > row[k + 1] && row[k] > 1.0)
            .collect();
        assert_eq!(peaks, vec![89, 134]);
    }

    #[test]
    fn absolute_phase_reference() {
        // A DC-free complex check: the same sinusoid analysed from two frame
        // offsets carries phases consistent with absolute sample indexing.
        let clip = sine(48_000.0 / 64.0 * 5.0, 0.1, 48_000);
        let f = stft(&clip, 64, 16, WindowKind::Rectangular).unwrap();
        let bins = f.spectrogram.bins;
        let a = f.values[5];
        let b = f.values[bins + 5];
        assert!((a - b).norm() < 1e-9 * a.norm().max(1.0));
    }

    #[test]
    fn parseval_with_hann_75_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, hop) = (1024usize, 256usize);
        for _ in 0..5 {
            let core: Vec<f64> = (0..20_000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut samples = vec![0.0; n];
            samples.extend(&core);
            samples.extend(vec![0.0; n]);
            let clip = AudioClip::new(samples, 48_000).unwrap();
            let s = stft(&clip, n, hop, WindowKind::Hann).unwrap().spectrogram;
            let total: f64 = (0..s.frames).map(|t| s.frame_energy(t)).sum();
            let w_power: f64 = hann_window(n).iter().map(|w| w * w).sum::<f64>() / hop as f64;
            let energy: f64 = core.iter().map(|x| x * x).sum();
            assert!(((total / w_power) / energy - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let clip = AudioClip::silence(0.01, 48_000);
        assert!(matches!(
            stft(&clip, 4096, 1024, WindowKind::Hann),
            Err(AudioError::WindowTooLong { .. })
        ));
        let empty = AudioClip::new(vec![], 48_000).unwrap();
        assert!(matches!(
            stft(&empty, 4, 1, WindowKind::Hann),
            Err(AudioError::EmptySignal)
        ));
    }
}
