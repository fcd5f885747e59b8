//! Simulated robot music-therapy engine.

pub mod affect;
pub mod audio;
pub mod config;
pub mod instrument;
pub mod scoring;
pub mod service;
pub mod session;
pub mod trajectory;
pub mod vision;

pub use instrument::{Melody, NoteId, XylophoneModel};
