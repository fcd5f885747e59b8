use serde::{Deserialize, Serialize};

use super::stft::{stft, Spectrogram, WindowKind};
use super::{AudioClip, AudioError};
use crate::instrument::{nearest_note, NoteId, DEFAULT_TOL_RATIO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub band_hz: (f64, f64),
    /// Frames below this fraction of the loudest frame's in-band energy are silent.
    pub energy_floor: f64,
    pub min_note_s: f64,
    pub tol_ratio: f64,
    pub window_len: usize,
    pub hop: usize,
    /// Minimum share of in-band energy held by the peak and its two neighbours.
    pub tonality: f64,
    /// A sounding note may retrigger once its energy falls below this fraction of its peak...
    pub dip_ratio: f64,
    /// ...and then rises by this factor over the lowest energy seen since.
    pub rise_ratio: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            band_hz: (900.0, 3100.0),
            energy_floor: 0.01,
            min_note_s: 0.08,
            tol_ratio: DEFAULT_TOL_RATIO,
            window_len: 4096,
            hop: 1024,
            tonality: 0.1,
            dip_ratio: 0.5,
            rise_ratio: 2.0,
        }
    }
}

impl DetectionConfig {
    fn validate(&self) -> Result<(), AudioError> {
        let (lo, hi) = self.band_hz;
        if !(lo > 0.0 && lo < hi) {
            return Err(AudioError::BadParameters("detection band must satisfy 0 < low < high"));
        }
        if !(self.energy_floor > 0.0 && self.tol_ratio > 0.0 && self.min_note_s >= 0.0) {
            return Err(AudioError::BadParameters("thresholds must be positive"));
        }
        if self.window_len == 0 || self.hop == 0 || self.rise_ratio <= 1.0 {
            return Err(AudioError::BadParameters("bad framing or retrigger parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedNote {
    pub note: NoteId,
    pub onset_s: f64,
}

struct FrameInfo {
    energy: f64,
    note: Option<NoteId>,
}

struct Event {
    note: NoteId,
    first: usize,
    last: usize,
    peak: f64,
    trough: Option<f64>,
}

/// Monophonic note events from a clip: one event per struck note, in time order.
pub fn detect_notes(clip: &AudioClip, cfg: &DetectionConfig) -> Result<Vec<DetectedNote>, AudioError> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let padded;
    let clip = if clip.len() < cfg.window_len {
        let mut samples = clip.samples.clone();
        samples.resize(cfg.window_len, 0.0);
        padded = AudioClip {
            samples,
            sample_rate: clip.sample_rate,
        };
        &padded
    } else {
        clip
    };
    let spec = stft(clip, cfg.window_len, cfg.hop, WindowKind::Hann)?.spectrogram;
    let lo_bin = (cfg.band_hz.0 / spec.bin_hz).ceil().max(1.0) as usize;
    let hi_bin = ((cfg.band_hz.1 / spec.bin_hz).floor() as usize).min(spec.bins - 2);
    if lo_bin >= hi_bin {
        return Err(AudioError::BadParameters("detection band narrower than one bin"));
    }

    let frames: Vec<FrameInfo> = (0..spec.frames)
        .map(|t| analyse_frame(&spec, t, lo_bin, hi_bin, cfg))
        .collect();
    let loudest = frames.iter().fold(0.0f64, |m, f| m.max(f.energy));
    if loudest <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = cfg.energy_floor * loudest;

    let mut events: Vec<Event> = Vec::new();
    let mut open: Option<Event> = None;
    for (t, frame) in frames.iter().enumerate() {
        let note = match frame.note {
            Some(n) if frame.energy >= floor => n,
            _ => {
                events.extend(open.take());
                continue;
            }
        };
        let retrigger = match open.as_mut() {
            None => true,
            Some(ev) if ev.note != note => true,
            Some(ev) => {
                let mut fire = false;
                if let Some(trough) = ev.trough {
                    if frame.energy > cfg.rise_ratio * trough {
                        fire = true;
                    } else {
                        ev.trough = Some(trough.min(frame.energy));
                    }
                } else if frame.energy < cfg.dip_ratio * ev.peak {
                    ev.trough = Some(frame.energy);
                }
                if !fire {
                    ev.last = t;
                    ev.peak = ev.peak.max(frame.energy);
                }
                fire
            }
        };
        if retrigger {
            events.extend(open.take());
            open = Some(Event {
                note,
                first: t,
                last: t,
                peak: frame.energy,
                trough: None,
            });
        }
    }
    events.extend(open);

    let frame_s = cfg.hop as f64 / clip.sample_rate as f64;
    let mut out: Vec<DetectedNote> = Vec::new();
    for ev in events {
        let duration = (ev.last - ev.first + 1) as f64 * frame_s;
        if duration < cfg.min_note_s {
            continue;
        }
        let onset_s = estimate_onset(&spec, ev.note, ev.first, cfg);
        if let Some(prev) = out.last() {
            if onset_s <= prev.onset_s {
                continue;
            }
        }
        out.push(DetectedNote {
            note: ev.note,
            onset_s,
        });
    }
    Ok(out)
}

fn analyse_frame(
    spec: &Spectrogram,
    t: usize,
    lo_bin: usize,
    hi_bin: usize,
    cfg: &DetectionConfig,
) -> FrameInfo {
    let row = spec.frame(t);
    let band = &row[lo_bin..=hi_bin];
    let energy: f64 = band.iter().sum();
    if energy <= 0.0 {
        return FrameInfo { energy, note: None };
    }
    let k = lo_bin
        + band
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
    let local = row[k - 1] + row[k] + row[k + 1];
    if local < cfg.tonality * energy {
        return FrameInfo { energy, note: None };
    }
    // Parabolic interpolation of the log-power peak.
    let (a, b, c) = (
        row[k - 1].max(1e-300).ln(),
        row[k].max(1e-300).ln(),
        row[k + 1].max(1e-300).ln(),
    );
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let freq = (k as f64 + offset) * spec.bin_hz;
    FrameInfo {
        energy,
        note: nearest_note(freq, cfg.tol_ratio),
    }
}

/// Energy near one note's bin, which isolates it from other ringing bars.
fn note_energy(spec: &Spectrogram, t: usize, note: NoteId) -> f64 {
    let centre = (note.frequency() / spec.bin_hz).round() as usize;
    let row = spec.frame(t);
    let lo = centre.saturating_sub(3);
    let hi = (centre + 3).min(spec.bins - 1);
    row[lo..=hi].iter().sum()
}

/// Onset from the half-energy rise of the note's own energy track. A tone
/// that starts at the centre of an analysis window fills half of the window's
/// Hann-weighted energy, so the crossing frame's centre marks the onset.
fn estimate_onset(spec: &Spectrogram, note: NoteId, first: usize, cfg: &DetectionConfig) -> f64 {
    let lo = first.saturating_sub(4);
    let hi = (first + 4).min(spec.frames - 1);
    let track: Vec<f64> = (lo..=hi).map(|t| note_energy(spec, t, note)).collect();
    let base = track[..=first - lo].iter().copied().fold(f64::INFINITY, f64::min);
    let top = track[first - lo..].iter().copied().fold(0.0, f64::max);
    let half = base + 0.5 * (top - base);

    let centre = |t: f64| (t * cfg.hop as f64 + cfg.window_len as f64 / 2.0) / spec.sample_rate as f64;
    // Last upward crossing of `half` at or before the peak.
    let peak_idx = track
        .iter()
        .enumerate()
        .skip(first - lo)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(first - lo);
    let mut crossing = None;
    for i in 1..=peak_idx {
        if track[i - 1] < half && track[i] >= half {
            let frac = (half - track[i - 1]) / (track[i] - track[i - 1]);
            crossing = Some((lo + i - 1) as f64 + frac);
        }
    }
    match crossing {
        Some(t) => centre(t).max(0.0),
        // Already sounding in the first analysed frame: the clip starts mid-note.
        None if lo == first => spec.frame_time(first),
        None => centre(first as f64),
    }
}
