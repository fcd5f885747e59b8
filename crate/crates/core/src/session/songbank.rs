use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::instrument::{parse_notes, Melody};

pub const TWINKLE: &str = "Twinkle, Twinkle, Little Star";

const BUILTIN: &str = include_str!("../../data/songs.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Song {
    pub name: String,
    /// Hex digits, one per bar.
    pub notes: String,
    pub tempo_bpm: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub placeholder: bool,
}

impl Song {
    pub fn melody(&self) -> Result<Melody, SessionError> {
        let notes = parse_notes(&self.notes).map_err(|e| SessionError::BadSong(self.name.clone(), e.to_string()))?;
        Melody::new(notes, self.tempo_bpm).map_err(|e| SessionError::BadSong(self.name.clone(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongBank {
    #[serde(rename = "song")]
    pub songs: Vec<Song>,
}

impl SongBank {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("bundled song bank is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        let bank: Self = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        if bank.songs.is_empty() {
            return Err(SessionError::EmptySongBank);
        }
        for s in &bank.songs {
            s.melody()?;
        }
        Ok(bank)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn get(&self, name: &str) -> Result<&Song, SessionError> {
        self.songs
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| SessionError::UnknownSong(name.to_string()))
    }
}
