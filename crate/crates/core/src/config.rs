//! Engine configuration file (TOML), located through `MELODICA_CONFIG`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::DetectionConfig;
use crate::instrument::XylophoneModel;
use crate::session::{RobotTiming, SessionConfig, SongBank};
use crate::trajectory::{Placement, TrajectoryOptions};

pub const CONFIG_ENV: &str = "MELODICA_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("invalid configuration in {0}: {1}")]
    Parse(PathBuf, String),
    #[error(transparent)]
    Session(#[from] crate::session::SessionError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub instrument: XylophoneModel,
    pub placement: Placement,
    pub trajectory: TrajectoryOptions,
    pub detection: DetectionConfig,
    pub session: SessionConfig,
    pub timing: RobotTiming,
    /// Song bank file; the bundled bank when absent. Relative paths resolve
    /// against the config file's directory.
    pub song_bank: Option<PathBuf>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.session.validate().map_err(|e| e.to_string())?;
        cfg.instrument.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.into(), e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| ConfigError::Parse(path.into(), e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// The file named by `MELODICA_CONFIG`, or defaults when it is unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(PathBuf::from(p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn song_bank(&self) -> Result<SongBank, ConfigError> {
        match &self.song_bank {
            None => Ok(SongBank::builtin()),
            Some(p) => {
                let full = match (&self.base_dir, p.is_relative()) {
                    (Some(base), true) => base.join(p),
                    _ => p.clone(),
                };
                Ok(SongBank::load(full)?)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_partial_files_fill_in() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = EngineConfig::from_toml("[session]\nresponse_window_s = 9.0\n").unwrap();
        assert_eq!(partial.session.response_window_s, 9.0);
        assert_eq!(partial.session.practice_trials, 10);
        assert!(EngineConfig::from_toml("[session]\nresponse_window_s = 12.0\n").is_err());
    }

    #[test]
    fn song_bank_path_resolves_next_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("songs.toml"), "[[song]]\nname = \"Solo\"\nnotes = \"123\"\ntempo_bpm = 90.0\n").unwrap();
        std::fs::write(dir.path().join("engine.toml"), "song_bank = \"songs.toml\"\n").unwrap();
        let cfg = EngineConfig::load(dir.path().join("engine.toml")).unwrap();
        assert_eq!(cfg.song_bank().unwrap().songs[0].name, "Solo");
        assert!(matches!(EngineConfig::load(dir.path().join("missing.toml")), Err(ConfigError::Read(..))));
    }
}
