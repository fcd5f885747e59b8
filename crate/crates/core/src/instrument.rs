//! The 11-bar diatonic glockenspiel shared by every other module.
//!
//! Bars are numbered 1..=11 from C6 to F7 and written as single hexadecimal
//! digits `1`..`b`. Geometry lives in the *instrument frame*: origin at the
//! centre of the body footprint on the table, `x` running along the body
//! toward higher pitch, `y` across the bars, `z` up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of bars on the instrument.
pub const BAR_COUNT: usize = 11;

/// MIDI numbers of the diatonic C-major run C6..F7.
const MIDI: [u8; BAR_COUNT] = [84, 86, 88, 89, 91, 93, 95, 96, 98, 100, 101];

const PITCH_NAMES: [&str; BAR_COUNT] = [
    "C6", "D6", "E6", "F6", "G6", "A6", "B6", "C7", "D7", "E7", "F7",
];

/// Bar 6 is pure blue; the rest form a palette that stays clear of blue hues.
const PALETTE: [[u8; 3]; BAR_COUNT] = [
    [230, 25, 25],
    [245, 130, 20],
    [240, 220, 30],
    [150, 220, 40],
    [30, 170, 60],
    [0, 0, 255],
    [140, 60, 200],
    [220, 50, 180],
    [250, 120, 150],
    [150, 90, 40],
    [235, 235, 235],
];

/// Index (1-based) of the blue centre reference bar.
pub const CENTER_BAR: u8 = 6;

/// Default frequency tolerance for [`nearest_note`].
pub const DEFAULT_TOL_RATIO: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstrumentError {
    #[error("invalid note digit at position {0}")]
    InvalidDigit(usize),
    #[error("note value {0} outside 1..=11")]
    OutOfRange(u8),
    #[error("empty melody")]
    EmptyMelody,
    #[error("onsets must match notes and be strictly increasing")]
    BadOnsets,
    #[error("tempo must be positive")]
    BadTempo,
    #[error("invalid instrument definition: {0}")]
    InvalidModel(String),
}

/// A bar identity in `1..=11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NoteId(u8);

impl NoteId {
    pub fn new(value: u8) -> Result<Self, InstrumentError> {
        if (1..=BAR_COUNT as u8).contains(&value) {
            Ok(Self(value))
        } else {
            Err(InstrumentError::OutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based bar index.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < BAR_COUNT).then(|| Self(index as u8 + 1))
    }

    pub fn all() -> impl Iterator<Item = NoteId> {
        (1..=BAR_COUNT as u8).map(NoteId)
    }

    pub fn from_hex(c: char) -> Option<Self> {
        let v = c.to_digit(16)?;
        Self::new(v as u8).ok()
    }

    pub fn hex(self) -> char {
        std::char::from_digit(self.0 as u32, 16).expect("note fits in one hex digit")
    }

    pub fn midi(self) -> u8 {
        MIDI[self.index()]
    }

    pub fn pitch_name(self) -> &'static str {
        PITCH_NAMES[self.index()]
    }

    /// Equal-temperament frequency (A4 = 440 Hz).
    pub fn frequency(self) -> f64 {
        midi_to_hz(self.midi())
    }
}

impl fmt::Display for NoteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hex())
    }
}

impl Serialize for NoteId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        s.serialize_str(self.hex().encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for NoteId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => NoteId::from_hex(c)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid note digit {c:?}"))),
            _ => Err(serde::de::Error::custom(format!("invalid note {s:?}"))),
        }
    }
}

pub fn midi_to_hz(midi: u8) -> f64 {
    440.0 * 2f64.powf((midi as f64 - 69.0) / 12.0)
}

pub fn note_frequency(note: NoteId) -> f64 {
    note.frequency()
}

/// Bar whose frequency is relatively closest to `freq_hz`, if within `tol_ratio`.
/// Ties go to the lower note.
pub fn nearest_note(freq_hz: f64, tol_ratio: f64) -> Option<NoteId> {
    if !(freq_hz > 0.0) {
        return None;
    }
    let mut best: Option<(NoteId, f64)> = None;
    for note in NoteId::all() {
        let f = note.frequency();
        let ratio = (freq_hz - f).abs() / f;
        if best.is_none_or(|(_, r)| ratio < r) {
            best = Some((note, ratio));
        }
    }
    best.filter(|&(_, r)| r <= tol_ratio).map(|(n, _)| n)
}

/// A monophonic note sequence with either explicit onsets or a tempo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Melody {
    pub notes: Vec<NoteId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onsets_s: Option<Vec<f64>>,
    pub tempo_bpm: f64,
}

pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

impl Melody {
    pub fn new(notes: Vec<NoteId>, tempo_bpm: f64) -> Result<Self, InstrumentError> {
        if !(tempo_bpm > 0.0) || !tempo_bpm.is_finite() {
            return Err(InstrumentError::BadTempo);
        }
        Ok(Self {
            notes,
            onsets_s: None,
            tempo_bpm,
        })
    }

    pub fn with_onsets(
        notes: Vec<NoteId>,
        onsets_s: Vec<f64>,
        tempo_bpm: f64,
    ) -> Result<Self, InstrumentError> {
        let mut m = Self::new(notes, tempo_bpm)?;
        if onsets_s.len() != m.notes.len()
            || onsets_s.iter().any(|t| !t.is_finite())
            || onsets_s.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(InstrumentError::BadOnsets);
        }
        m.onsets_s = Some(onsets_s);
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn beat_s(&self) -> f64 {
        60.0 / self.tempo_bpm
    }

    /// Explicit onsets, or one note per beat starting at zero.
    pub fn resolved_onsets(&self) -> Vec<f64> {
        match &self.onsets_s {
            Some(o) => o.clone(),
            None => (0..self.notes.len())
                .map(|i| i as f64 * self.beat_s())
                .collect(),
        }
    }

    /// Time from the first onset to one beat after the last.
    pub fn duration_s(&self) -> f64 {
        self.resolved_onsets()
            .last()
            .map(|t| t + self.beat_s())
            .unwrap_or(0.0)
    }

    pub fn to_hex(&self) -> String {
        render_hex(&self.notes)
    }
}

impl FromStr for Melody {
    type Err = InstrumentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_melody(s)
    }
}

pub fn render_hex(notes: &[NoteId]) -> String {
    notes.iter().map(|n| n.hex()).collect()
}

/// Parse notes written as hex digits, one per character (`1`..`b`).
pub fn parse_notes(s: &str) -> Result<Vec<NoteId>, InstrumentError> {
    s.chars()
        .enumerate()
        .map(|(i, c)| NoteId::from_hex(c).ok_or(InstrumentError::InvalidDigit(i)))
        .collect()
}

pub fn parse_hex_melody(s: &str) -> Result<Melody, InstrumentError> {
    if s.is_empty() {
        return Err(InstrumentError::EmptyMelody);
    }
    Melody::new(parse_notes(s)?, DEFAULT_TEMPO_BPM)
}

/// One sound bar: identity, tuning, color and placement in the instrument frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub note: NoteId,
    pub pitch_name: String,
    pub freq_hz: f64,
    pub color: [u8; 3],
    /// Playable extent along the bar (instrument `y`), cm.
    pub length_cm: f64,
    /// Playable extent across the bar (instrument `x`), cm.
    pub width_cm: f64,
    /// Centre of the bar's top surface, cm.
    pub center_cm: [f64; 3],
    #[serde(default)]
    pub reference: bool,
}

impl Bar {
    /// Whether an instrument-frame point lies over the playable area.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (x - self.center_cm[0]).abs() <= self.width_cm / 2.0
            && (y - self.center_cm[1]).abs() <= self.length_cm / 2.0
    }

    pub fn top_z(&self) -> f64 {
        self.center_cm[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XylophoneModel {
    pub bars: Vec<Bar>,
    /// Length × depth × height of the instrument including bars, cm.
    pub body_cm: [f64; 3],
    /// Height of the resonating body below the bars, cm.
    #[serde(default = "default_body_top")]
    pub body_top_cm: f64,
    #[serde(default = "default_body_color")]
    pub body_color: [u8; 3],
    #[serde(default)]
    pub stand_height_cm: f64,
}

fn default_body_top() -> f64 {
    3.5
}

fn default_body_color() -> [u8; 3] {
    [70, 45, 30]
}

pub const BAR_PITCH_CM: f64 = 2.6;
pub const BAR_WIDTH_CM: f64 = 2.0;
pub const LARGEST_BAR_CM: f64 = 4.8;
pub const SMALLEST_BAR_CM: f64 = 2.8;

impl Default for XylophoneModel {
    fn default() -> Self {
        let body_cm = [31.0, 9.5, 4.0];
        let center = CENTER_BAR as f64;
        let bars = NoteId::all()
            .map(|note| {
                let i = note.index() as f64;
                let length =
                    LARGEST_BAR_CM - (LARGEST_BAR_CM - SMALLEST_BAR_CM) * i / (BAR_COUNT - 1) as f64;
                Bar {
                    note,
                    pitch_name: note.pitch_name().to_string(),
                    freq_hz: note.frequency(),
                    color: PALETTE[note.index()],
                    length_cm: length,
                    width_cm: BAR_WIDTH_CM,
                    center_cm: [(note.value() as f64 - center) * BAR_PITCH_CM, 0.0, body_cm[2]],
                    reference: note.value() == CENTER_BAR,
                }
            })
            .collect();
        Self {
            bars,
            body_cm,
            body_top_cm: default_body_top(),
            body_color: default_body_color(),
            stand_height_cm: 0.0,
        }
    }
}

impl XylophoneModel {
    pub fn bar(&self, note: NoteId) -> &Bar {
        &self.bars[note.index()]
    }

    pub fn reference_bar(&self) -> &Bar {
        self.bars
            .iter()
            .find(|b| b.reference)
            .expect("validated model has a reference bar")
    }

    /// Bar whose playable area contains the instrument-frame point `(x, y)`.
    pub fn bar_at(&self, x: f64, y: f64) -> Option<&Bar> {
        self.bars.iter().find(|b| b.contains_xy(x, y))
    }

    /// Body footprint corners at height `z`, counter-clockwise seen from above.
    pub fn body_outline(&self, z: f64) -> [[f64; 3]; 4] {
        let (hx, hy) = (self.body_cm[0] / 2.0, self.body_cm[1] / 2.0);
        [[-hx, -hy, z], [hx, -hy, z], [hx, hy, z], [-hx, hy, z]]
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        let bad = |m: &str| Err(InstrumentError::InvalidModel(m.to_string()));
        if self.bars.len() != BAR_COUNT {
            return bad("expected 11 bars");
        }
        for (i, bar) in self.bars.iter().enumerate() {
            if bar.note.index() != i {
                return bad("bars must be listed in note order");
            }
            if !(bar.freq_hz > 0.0) {
                return bad("bar frequency must be positive");
            }
            let (hx, hy) = (self.body_cm[0] / 2.0, self.body_cm[1] / 2.0);
            if bar.center_cm[0].abs() + bar.width_cm / 2.0 > hx
                || bar.center_cm[1].abs() + bar.length_cm / 2.0 > hy
            {
                return bad("bar outside body footprint");
            }
        }
        if self.bars.windows(2).any(|w| w[1].freq_hz <= w[0].freq_hz) {
            return bad("frequencies must increase with bar number");
        }
        if self.bars.iter().filter(|b| b.reference).count() != 1 {
            return bad("exactly one reference bar required");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, InstrumentError> {
        let model: Self =
            toml::from_str(text).map_err(|e| InstrumentError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("instrument model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn n(v: u8) -> NoteId {
        NoteId::new(v).unwrap()
    }

    #[test]
    fn equal_temperament_frequencies() {
        assert_relative_eq!(note_frequency(n(1)), 1046.50, epsilon = 0.005);
        assert_relative_eq!(note_frequency(n(5)), 1567.98, epsilon = 0.005);
        assert_relative_eq!(note_frequency(n(11)), 2793.83, epsilon = 0.005);
    }

    #[test]
    fn diatonic_step_pattern() {
        let semitone = 2f64.powf(1.0 / 12.0);
        let tone = 2f64.powf(2.0 / 12.0);
        for w in NoteId::all().collect::<Vec<_>>().windows(2) {
            let r = w[1].frequency() / w[0].frequency();
            assert!(
                (r / semitone - 1.0).abs() < 1e-6 || (r / tone - 1.0).abs() < 1e-6,
                "ratio {r}"
            );
        }
    }

    #[test]
    fn nearest_note_examples() {
        assert_eq!(nearest_note(1046.5, 0.03), Some(n(1)));
        assert_eq!(nearest_note(1570.0, 0.03), Some(n(5)));
        assert_eq!(nearest_note(500.0, 0.03), None);
        assert_eq!(nearest_note(0.0, 0.03), None);
        for note in NoteId::all() {
            assert_eq!(nearest_note(note.frequency(), DEFAULT_TOL_RATIO), Some(note));
        }
    }

    #[test]
    fn nearest_note_breaks_ties_low() {
        // Relative differences to E6 and F6 agree at their harmonic mean.
        let (e, f) = (n(3).frequency(), n(4).frequency());
        let mid = 2.0 * e * f / (e + f);
        assert_eq!(nearest_note(mid, 0.5), Some(n(3)));
    }

    #[test]
    fn parse_examples() {
        let m = parse_hex_melody("1155665").unwrap();
        assert_eq!(
            m.notes.iter().map(|n| n.value()).collect::<Vec<_>>(),
            [1, 1, 5, 5, 6, 6, 5]
        );
        assert!(m.onsets_s.is_none());
        assert_eq!(parse_hex_melody("b").unwrap().notes, vec![n(11)]);
        assert_eq!(parse_hex_melody("10"), Err(InstrumentError::InvalidDigit(1)));
        assert_eq!(parse_hex_melody("1c"), Err(InstrumentError::InvalidDigit(1)));
        assert_eq!(parse_hex_melody("x"), Err(InstrumentError::InvalidDigit(0)));
        assert_eq!(parse_hex_melody("B"), Ok(parse_hex_melody("b").unwrap()));
        assert_eq!(parse_hex_melody(""), Err(InstrumentError::EmptyMelody));
    }

    #[test]
    fn parse_is_total_on_alphabet() {
        for c in (0u8..=127).map(char::from) {
            let ok = matches!(c, '1'..='9' | 'a' | 'b' | 'A' | 'B');
            assert_eq!(parse_notes(&c.to_string()).is_ok(), ok, "{c:?}");
        }
        for note in NoteId::all() {
            assert_eq!(NoteId::from_hex(note.hex()), Some(note));
        }
    }

    #[test]
    fn default_model_geometry() {
        let model = XylophoneModel::default();
        model.validate().unwrap();
        assert_eq!(model.reference_bar().note, n(6));
        assert_eq!(model.reference_bar().color, [0, 0, 255]);
        assert_relative_eq!(model.bar(n(1)).length_cm, 4.8);
        assert_relative_eq!(model.bar(n(11)).length_cm, 2.8);
        let names: Vec<_> = model.bars.iter().map(|b| b.pitch_name.as_str()).collect();
        assert_eq!(names, PITCH_NAMES);
        assert_eq!(model.bar_at(0.0, 0.0).unwrap().note, n(6));
        assert!(model.bar_at(BAR_PITCH_CM / 2.0, 0.0).is_none());
    }

    #[test]
    fn toml_round_trip_uses_documented_keys() {
        let model = XylophoneModel::default();
        let text = model.to_toml();
        for key in ["[[bars]]", "note = \"1\"", "freq_hz", "color", "body_cm"] {
            assert!(text.contains(key), "missing {key}");
        }
        assert_eq!(XylophoneModel::from_toml(&text).unwrap(), model);
    }

    #[test]
    fn melody_onsets_validated() {
        let notes = vec![n(1), n(5)];
        assert!(Melody::with_onsets(notes.clone(), vec![0.0, 1.0], 60.0).is_ok());
        assert_eq!(
            Melody::with_onsets(notes.clone(), vec![1.0, 1.0], 60.0),
            Err(InstrumentError::BadOnsets)
        );
        assert_eq!(
            Melody::with_onsets(notes, vec![0.0], 60.0),
            Err(InstrumentError::BadOnsets)
        );
        let m = Melody::new(vec![n(1), n(5)], 60.0).unwrap();
        assert_eq!(m.resolved_onsets(), vec![0.0, 1.0]);
    }
}
