//! RIFF/WAVE PCM16 reader and writer.

use std::fs;
use std::path::Path;

use super::{AudioClip, AudioError};

const MAX_CHANNELS: u16 = 4;

fn malformed(msg: impl Into<String>) -> AudioError {
    AudioError::MalformedHeader(msg.into())
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Read channel 0 of a PCM16 file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    read_wav_channel(path, 0)
}

/// Read one channel of a 1–4 channel PCM16 file, scaled by 1/32768.
pub fn read_wav_channel(path: impl AsRef<Path>, channel: u16) -> Result<AudioClip, AudioError> {
    let bytes = fs::read(path)?;
    decode(&bytes, channel)
}

pub(crate) fn decode(bytes: &[u8], channel: u16) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE preamble"));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body = at + 8;
        let end = body.checked_add(size).ok_or_else(|| malformed("chunk size overflow"))?;
        match id {
            b"fmt " => {
                if size < 16 || end > bytes.len() {
                    return Err(malformed("truncated fmt chunk"));
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                // Tolerate a data chunk whose declared size overruns the file.
                data = Some(&bytes[body.min(bytes.len())..end.min(bytes.len())]);
                break;
            }
            _ => {}
        }
        at = end + (size & 1);
    }
    let (format, channels, sample_rate, bits) = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    // 0xFFFE is WAVE_FORMAT_EXTENSIBLE; accepted when the payload is PCM16.
    if format != 1 && format != 0xFFFE {
        return Err(AudioError::UnsupportedEncoding(format!("format tag {format}")));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedEncoding(format!("{bits}-bit samples")));
    }
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(AudioError::UnsupportedEncoding(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    if channel >= channels {
        return Err(AudioError::BadParameters("selected channel not present"));
    }
    let frame = 2 * channels as usize;
    let offset = 2 * channel as usize;
    let samples = data
        .chunks_exact(frame)
        .map(|f| i16::from_le_bytes([f[offset], f[offset + 1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate,
    })
}

pub(crate) fn encode(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Write mono PCM16.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), AudioError> {
    fs::write(path, encode(clip))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn multichannel(channels: u16, frames: usize, value: impl Fn(u16) -> i16) -> Vec<u8> {
        let data_len = frames * channels as usize * 2;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&48_000u32.to_le_bytes());
        out.extend_from_slice(&(48_000u32 * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for _ in 0..frames {
            for c in 0..channels {
                out.extend_from_slice(&value(c).to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn sine_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..48_000)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 48_000.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 48_000).unwrap();
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 48_000);
        assert_eq!(back.len(), clip.len());
        let err = clip
            .samples
            .iter()
            .zip(&back.samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1.0 / 32768.0, "{err}");
    }

    #[test]
    fn selects_requested_channel() {
        let bytes = multichannel(4, 100, |c| (c as i16 + 1) * 1000);
        let clip = decode(&bytes, 2).unwrap();
        assert_eq!(clip.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 3000.0 / 32768.0));
        assert!(decode(&bytes, 4).is_err());
    }

    #[test]
    fn truncated_header_is_malformed() {
        let bytes = multichannel(1, 10, |_| 0);
        assert!(matches!(decode(&bytes[..20], 0), Err(AudioError::MalformedHeader(_))));
        assert!(matches!(decode(b"RIFX", 0), Err(AudioError::MalformedHeader(_))));
    }

    #[test]
    fn rejects_non_pcm16() {
        let mut bytes = multichannel(1, 10, |_| 0);
        bytes[34] = 24;
        assert!(matches!(decode(&bytes, 0), Err(AudioError::UnsupportedEncoding(_))));
        let mut bytes = multichannel(1, 10, |_| 0);
        bytes[20] = 3;
        assert!(matches!(decode(&bytes, 0), Err(AudioError::UnsupportedEncoding(_))));
    }

    #[test]
    fn encoding_is_bit_exact() {
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 1.0, -1.0], 8000).unwrap();
        let bytes = encode(&clip);
        assert_eq!(bytes.len(), 44 + 10);
        let data: Vec<i16> = bytes[44..]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        assert_eq!(data, vec![0, 16384, -16384, 32767, -32768]);
    }
}
