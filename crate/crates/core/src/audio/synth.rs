use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::instrument::Melody;

/// Struck-bar sound model: exponentially decaying sinusoid per note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timbre {
    pub decay_tau_s: f64,
    pub amplitude: f64,
    pub noise_rms: f64,
    pub noise_seed: u64,
    /// Silence kept after the last onset, seconds.
    pub tail_s: f64,
    pub sample_rate: u32,
}

impl Default for Timbre {
    fn default() -> Self {
        Self {
            decay_tau_s: 0.3,
            amplitude: 0.8,
            noise_rms: 0.0,
            noise_seed: 0,
            tail_s: 1.2,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl Timbre {
    pub fn with_noise(mut self, noise_rms: f64, seed: u64) -> Self {
        self.noise_rms = noise_rms;
        self.noise_seed = seed;
        self
    }
}

/// Render a melody: `amplitude·e^(−t/τ)·sin(2πft)` per note from its onset,
/// summed, plus optional white noise, scaled down if the peak exceeds 1.
pub fn synthesize_melody(melody: &Melody, timbre: &Timbre) -> AudioClip {
    let sr = timbre.sample_rate as f64;
    let onsets = melody.resolved_onsets();
    let start = onsets.first().copied().unwrap_or(0.0).min(0.0);
    let end = onsets.last().copied().unwrap_or(0.0) + timbre.tail_s;
    let len = ((end - start) * sr).ceil().max(0.0) as usize;
    let mut samples = vec![0.0; len];

    // Rings until the envelope drops below 1e-9 of the strike.
    let ring = if timbre.decay_tau_s > 0.0 { (timbre.decay_tau_s * 21.0 * sr) as usize } else { 0 };
    for (note, onset) in melody.notes.iter().zip(&onsets) {
        let first = ((onset - start) * sr).round() as usize;
        let last = (first + ring).min(len);
        // Decaying phasor advanced by one complex multiply per sample.
        let step = Complex64::from_polar(
            (-1.0 / (timbre.decay_tau_s * sr)).exp(),
            2.0 * PI * note.frequency() / sr,
        );
        let mut z = Complex64::new(timbre.amplitude, 0.0);
        for (i, s) in samples[first.min(len)..last].iter_mut().enumerate() {
            if i % 4096 == 0 {
                // Re-anchor to keep rounding drift negligible on long tails.
                let t = i as f64 / sr;
                z = Complex64::from_polar(
                    timbre.amplitude * (-t / timbre.decay_tau_s).exp(),
                    2.0 * PI * note.frequency() * t,
                );
            }
            *s += z.im;
            z *= step;
        }
    }

    if timbre.noise_rms > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(timbre.noise_seed);
        let normal = Normal::new(0.0, timbre.noise_rms).expect("finite noise level");
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 1.0 {
        for s in &mut samples {
            *s /= peak;
        }
    }
    AudioClip {
        samples,
        sample_rate: timbre.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{parse_hex_melody, NoteId};

    #[test]
    fn zero_amplitude_is_silent() {
        let m = parse_hex_melody("135").unwrap();
        let clip = synthesize_melody(
            &m,
            &Timbre {
                amplitude: 0.0,
                ..Timbre::default()
            },
        );
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn second_onset_follows_tempo() {
        let m = Melody::new(vec![NoteId::new(1).unwrap(), NoteId::new(5).unwrap()], 60.0).unwrap();
        let clip = synthesize_melody(&m, &Timbre::default());
        let sr = clip.sample_rate as usize;
        // Samples just before the second onset belong to note 1 only; the
        // second note starts contributing exactly at sample `sr`.
        let only_first = synthesize_melody(
            &Melody::new(vec![NoteId::new(1).unwrap()], 60.0).unwrap(),
            &Timbre::default(),
        );
        assert_eq!(clip.samples[sr], only_first.samples[sr]);
        assert_ne!(clip.samples[sr + 1], only_first.samples[sr + 1]);
    }

    #[test]
    fn peak_is_bounded() {
        let m = Melody::with_onsets(
            NoteId::all().collect(),
            (0..11).map(|i| i as f64 * 0.001).collect(),
            120.0,
        )
        .unwrap();
        let clip = synthesize_melody(&m, &Timbre::default().with_noise(0.3, 1));
        assert!(clip.samples.iter().all(|s| s.abs() <= 1.0));
    }
}
