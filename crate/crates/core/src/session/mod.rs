//! Session engine: plans, the conversation automaton, turn-taking grading,
//! game modes, event logs and scripted runs.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::{Melody, NoteId, BAR_COUNT};
use crate::scoring::{TrialRecord, DEFAULT_ACCURACY_THRESHOLD};

mod driver;
mod engine;
mod log;
mod runner;
mod songbank;

pub use driver::{Driver, RobotTiming};
pub use engine::{SessionEngine, SessionSnapshot, SessionSummary, Stage};
pub use log::{replay, Direction, LogRecord, ReplayReport, SessionLog, GRADING_NOTE};
pub use runner::{run_scripted, Persona, RobotRig, RunOptions, ScriptedRun, FREE_PLAY_MOTIF};
pub use songbank::{Song, SongBank, TWINKLE};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown song: {0}")]
    UnknownSong(String),
    #[error("song bank is empty")]
    EmptySongBank,
    #[error("song {0:?} is invalid: {1}")]
    BadSong(String, String),
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("event {event} is not legal in stage {stage}")]
    IllegalEvent { stage: String, event: String },
    #[error("game modes are only available during gameplay (stage {0})")]
    IllegalPhase(String),
    #[error("conversation {0} is still open")]
    OpenConversation(u32),
    #[error("no turn-taking grades to normalize")]
    NoGrades,
    #[error("log error: {0}")]
    Log(String),
    #[error("scripted run stalled at t={0:.3}s with nothing scheduled")]
    Stalled(f64),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum SessionKind {
    Baseline,
    Intervention(u8),
    Exit,
}

impl std::str::FromStr for SessionKind {
    type Err = SessionError;

    /// `baseline`, `exit`, or `intervention:N` with N in 1..=4.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "baseline" => return Ok(Self::Baseline),
            "exit" => return Ok(Self::Exit),
            _ => {}
        }
        let n = lower
            .strip_prefix("intervention")
            .map(|r| r.trim_start_matches([':', '-', ' ']))
            .and_then(|r| r.parse::<u8>().ok())
            .filter(|n| (1..=4).contains(n))
            .ok_or_else(|| SessionError::Config(format!("unknown session kind {s:?}")))?;
        Ok(Self::Intervention(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MusicPractice,
    MusicGameplay,
    WarmUp,
    SinglePractice,
    Gameplay,
}

impl Phase {
    pub fn is_gameplay(self) -> bool {
        matches!(self, Phase::MusicGameplay | Phase::Gameplay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Robot,
    Participant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnTakingGrade {
    Indifferent = 0,
    HeavyInterrupt = 1,
    LightInterrupt = 2,
    WellDone = 3,
}

impl TurnTakingGrade {
    pub fn points(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPrefs {
    pub song: Option<String>,
}

/// Tunables of the session engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Floor of the response window; longer targets get `0.5·len + 1.5` s, capped at 10.
    pub response_window_s: f64,
    pub warmup_trials: usize,
    pub practice_trials: usize,
    /// Trials per difficulty level in baseline and exit practice.
    pub ladder_trials: usize,
    pub max_extra_rounds: u32,
    pub accuracy_threshold: f64,
    pub free_play_s: f64,
    pub mode2_length: usize,
    pub cue_text: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            response_window_s: 7.0,
            warmup_trials: 3,
            practice_trials: 10,
            ladder_trials: 4,
            max_extra_rounds: 2,
            accuracy_threshold: DEFAULT_ACCURACY_THRESHOLD,
            free_play_s: 5.0,
            mode2_length: 4,
            cue_text: CUE_TEXT.to_string(),
        }
    }
}

pub const CUE_TEXT: &str = "Now, you shall play right after my eye flashes.";
pub const MAX_WINDOW_S: f64 = 10.0;
pub const MIN_WINDOW_S: f64 = 5.0;

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::Config(m.to_string()));
        if !(MIN_WINDOW_S..=MAX_WINDOW_S).contains(&self.response_window_s) {
            return bad("response_window_s must lie in [5, 10]");
        }
        if self.practice_trials == 0 || self.ladder_trials == 0 {
            return bad("practice blocks need at least one trial");
        }
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold < 1.0) {
            return bad("accuracy_threshold must lie in (0, 1)");
        }
        if !(self.free_play_s > 0.0) || self.mode2_length == 0 {
            return bad("free_play_s and mode2_length must be positive");
        }
        Ok(())
    }

    pub fn window_for(&self, target_len: usize) -> f64 {
        (0.5 * target_len as f64 + 1.5).max(self.response_window_s).min(MAX_WINDOW_S)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub kind: SessionKind,
    pub song: Song,
    pub phases: Vec<Phase>,
    pub response_window_s: f64,
    /// Practice unit lengths, one block per entry (a ladder for baseline and exit).
    pub practice_units: Vec<usize>,
    pub color_hint: bool,
}

impl SessionPlan {
    pub fn melody(&self) -> Result<Melody, SessionError> {
        self.song.melody()
    }
}

/// Practice unit length for an intervention session: 1, a short phrase, half, then the whole song.
pub fn unit_length(index: u8, song_len: usize) -> usize {
    let len = song_len.max(1);
    let half = len.div_ceil(2);
    match index {
        0 | 1 => 1,
        2 => 3.clamp(1, half),
        3 => half,
        _ => len,
    }
}

pub fn plan_session(
    kind: SessionKind,
    prefs: &ParticipantPrefs,
    bank: &SongBank,
    config: &SessionConfig,
) -> Result<SessionPlan, SessionError> {
    config.validate()?;
    if bank.songs.is_empty() {
        return Err(SessionError::EmptySongBank);
    }
    let chosen = match &prefs.song {
        Some(name) => Some(bank.get(name)?.clone()),
        None => None,
    };
    let song = match kind {
        SessionKind::Baseline => bank.get(TWINKLE)?.clone(),
        _ => match chosen {
            Some(s) => s,
            None => bank.get(TWINKLE)?.clone(),
        },
    };
    let len = song.melody()?.len();
    let (phases, units, hint) = match kind {
        SessionKind::Baseline | SessionKind::Exit => {
            let mut units: Vec<usize> = (1..=4).map(|i| unit_length(i, len)).collect();
            units.dedup();
            (vec![Phase::MusicPractice, Phase::MusicGameplay], units, false)
        }
        SessionKind::Intervention(n) => {
            if !(1..=4).contains(&n) {
                return Err(SessionError::Config(format!("intervention index {n} outside 1..=4")));
            }
            (
                vec![Phase::WarmUp, Phase::SinglePractice, Phase::Gameplay],
                vec![unit_length(n, len)],
                true,
            )
        }
    };
    Ok(SessionPlan {
        kind,
        song,
        phases,
        response_window_s: config.response_window_s,
        practice_units: units,
        color_hint: hint,
    })
}

/// Consecutive chunks of `unit` notes; the last may be shorter.
pub fn practice_chunks(notes: &[NoteId], unit: usize) -> Vec<Vec<NoteId>> {
    notes.chunks(unit.max(1)).map(<[NoteId]>::to_vec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelodyStyle {
    Consonant,
    Dissonant,
}

/// Consonant steps in semitones: minor/major thirds and sixths, fourth, fifth, octave.
pub const CONSONANT_SEMITONES: [u8; 7] = [3, 4, 5, 7, 8, 9, 12];
/// Seconds and the major seventh; the F–B tritone is added separately.
pub const DISSONANT_SEMITONES: [u8; 3] = [1, 2, 11];

pub fn interval_allowed(style: MelodyStyle, a: NoteId, b: NoteId) -> bool {
    let d = a.midi().abs_diff(b.midi());
    match style {
        MelodyStyle::Consonant => CONSONANT_SEMITONES.contains(&d),
        // Within C major the only six-semitone pair is F–B.
        MelodyStyle::Dissonant => DISSONANT_SEMITONES.contains(&d) || d == 6,
    }
}

/// Random walk over the bars where every step is an allowed interval.
pub fn generate_melody<R: Rng>(rng: &mut R, style: MelodyStyle, len: usize) -> Vec<NoteId> {
    let all: Vec<NoteId> = NoteId::all().collect();
    let mut out = Vec::with_capacity(len);
    let mut cur = *all.choose(rng).expect("bars exist");
    for _ in 0..len {
        out.push(cur);
        let next: Vec<NoteId> = all.iter().copied().filter(|&n| interval_allowed(style, cur, n)).collect();
        cur = *next.choose(rng).expect("every bar has an allowed neighbour");
    }
    debug_assert_eq!(all.len(), BAR_COUNT);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub actor: Actor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
}

impl Movement {
    fn new(actor: Actor) -> Self {
        Self { actor, start_s: None, end_s: None }
    }

    fn contains(&self, t: f64) -> bool {
        match (self.start_s, self.end_s) {
            (Some(a), Some(b)) => t >= a && t < b,
            (Some(a), None) => t >= a,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationKind {
    WarmUp,
    Practice,
    /// Mode 1: the robot plays a song and asks how it felt.
    Listen,
    /// Mode 2: generated melody, feeling question, then a judged repeat.
    Playback,
    /// Mode 3: free play imitated by the robot and rated.
    FreePlay,
}

impl ConversationKind {
    /// Practice-activity conversations carry a turn-taking grade.
    pub fn graded(self) -> bool {
        matches!(self, Self::WarmUp | Self::Practice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strike {
    pub note: NoteId,
    pub t_s: f64,
}

/// One demonstrate → repeat → result exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: u32,
    pub phase: Phase,
    pub kind: ConversationKind,
    pub target: Vec<NoteId>,
    pub movements: [Movement; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    pub strikes: Vec<Strike>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialRecord>,
    pub interrupted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grade: Option<TurnTakingGrade>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
}

impl Conversation {
    fn new(id: u32, phase: Phase, kind: ConversationKind, target: Vec<NoteId>) -> Self {
        let first = if kind == ConversationKind::FreePlay { Actor::Participant } else { Actor::Robot };
        let second = if kind == ConversationKind::FreePlay { Actor::Robot } else { Actor::Participant };
        Self {
            id,
            phase,
            kind,
            target,
            movements: [Movement::new(first), Movement::new(second), Movement::new(Actor::Robot)],
            window: None,
            strikes: Vec::new(),
            trial: None,
            interrupted: false,
            grade: None,
            mode: None,
            answer: None,
            rating: None,
        }
    }

    pub fn demonstrate(&self) -> &Movement {
        &self.movements[0]
    }

    pub fn repeat(&self) -> &Movement {
        &self.movements[1]
    }

    pub fn result(&self) -> &Movement {
        &self.movements[2]
    }

    pub fn is_closed(&self) -> bool {
        self.movements[2].end_s.is_some()
    }

    /// Notes struck from the end of the demonstration until the window closed.
    pub fn attempt(&self) -> Vec<NoteId> {
        let from = self.movements[0].end_s.unwrap_or(f64::INFINITY);
        let to = self.window.map(|w| w.1).unwrap_or(f64::NEG_INFINITY);
        self.strikes.iter().filter(|s| s.t_s >= from && s.t_s < to).map(|s| s.note).collect()
    }
}

/// Timing-rule grade of a closed conversation.
pub fn grade_turn_taking(conv: &Conversation) -> Result<TurnTakingGrade, SessionError> {
    if !conv.is_closed() {
        return Err(SessionError::OpenConversation(conv.id));
    }
    let Some(first) = conv.strikes.iter().map(|s| s.t_s).reduce(f64::min) else {
        return Ok(TurnTakingGrade::Indifferent);
    };
    let [demo, _, result] = &conv.movements;
    if conv.strikes.iter().any(|s| demo.contains(s.t_s)) {
        return Ok(TurnTakingGrade::HeavyInterrupt);
    }
    let opens = conv.window.map(|w| w.0).unwrap_or(f64::INFINITY);
    let during_result = conv.strikes.iter().any(|s| result.contains(s.t_s));
    if first < opens || during_result {
        return Ok(TurnTakingGrade::LightInterrupt);
    }
    Ok(TurnTakingGrade::WellDone)
}

/// Points as a percentage of the maximum (3 per conversation).
pub fn normalize_scores(grades: &[TurnTakingGrade]) -> Result<f64, SessionError> {
    if grades.is_empty() {
        return Err(SessionError::NoGrades);
    }
    let pts: u32 = grades.iter().map(|g| g.points()).sum();
    Ok(100.0 * pts as f64 / (3.0 * grades.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", content = "payload")]
pub enum SessionEvent {
    PhaseStart,
    DemonstrationDone {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        played: Option<Vec<NoteId>>,
    },
    CueIssued,
    Strike { note: NoteId },
    WindowElapsed,
    FeedbackDone,
    ModeSelected { mode: u8 },
    EmotionAnswer { text: String },
    Rating { value: u8 },
    StopRequested,
    PromptTimeout,
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PhaseStart => "phase_start",
            Self::DemonstrationDone { .. } => "demonstration_done",
            Self::CueIssued => "cue_issued",
            Self::Strike { .. } => "strike",
            Self::WindowElapsed => "window_elapsed",
            Self::FeedbackDone => "feedback_done",
            Self::ModeSelected { .. } => "mode_selected",
            Self::EmotionAnswer { .. } => "emotion_answer",
            Self::Rating { .. } => "rating",
            Self::StopRequested => "stop_requested",
            Self::PromptTimeout => "prompt_timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Mode,
    Emotion,
    Rating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "payload")]
pub enum SessionAction {
    PhaseBegin { phase: Phase },
    DemonstrateMelody {
        notes: Vec<NoteId>,
        tempo_bpm: f64,
        color_hint: bool,
        expects_repeat: bool,
    },
    VerbalCue { text: String },
    EyeFlash,
    OpenResponseWindow { duration_s: f64, free_play: bool },
    TrialScored { record: TrialRecord },
    Feedback {
        text: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        verdict: Option<crate::scoring::Verdict>,
    },
    ConversationClosed {
        id: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        grade: Option<TurnTakingGrade>,
    },
    GamePrompt { prompt: PromptKind, text: String },
    ExtraPractice { trials: u32 },
    PhaseComplete { phase: Phase },
    SessionDone { summary: SessionSummary },
}

impl SessionAction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PhaseBegin { .. } => "phase_begin",
            Self::DemonstrateMelody { .. } => "demonstrate_melody",
            Self::VerbalCue { .. } => "verbal_cue",
            Self::EyeFlash => "eye_flash",
            Self::OpenResponseWindow { .. } => "open_response_window",
            Self::TrialScored { .. } => "trial_scored",
            Self::Feedback { .. } => "feedback",
            Self::ConversationClosed { .. } => "conversation_closed",
            Self::GamePrompt { .. } => "game_prompt",
            Self::ExtraPractice { .. } => "extra_practice",
            Self::PhaseComplete { .. } => "phase_complete",
            Self::SessionDone { .. } => "session_done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_s: f64,
    #[serde(flatten)]
    pub event: SessionEvent,
}

impl TimedEvent {
    pub fn new(t_s: f64, event: SessionEvent) -> Self {
        Self { t_s, event }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub t_s: f64,
    #[serde(flatten)]
    pub action: SessionAction,
}
