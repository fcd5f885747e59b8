//! Audio side of the platform: the simulated instrument's sound, short-time
//! Fourier analysis and note detection, and WAV file I/O.

mod detect;
mod stft;
mod synth;
mod wav;

pub use detect::{detect_notes, DetectedNote, DetectionConfig};
pub use stft::{hann_window, stft, Spectrogram, StftFrames, WindowKind};
pub use synth::{synthesize_melody, Timbre};
pub use wav::{read_wav, read_wav_channel, write_wav};

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 48_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("window of {window} samples exceeds signal of {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("invalid analysis parameters: {0}")]
    BadParameters(&'static str),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio, samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::BadParameters("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::BadParameters("samples must be finite"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(duration_s: f64, sample_rate: u32) -> Self {
        let n = (duration_s * sample_rate as f64).round() as usize;
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}
