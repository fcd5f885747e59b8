use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Conversation, Driver, PromptKind, RobotTiming, SessionAction, SessionConfig, SessionError, SessionEvent,
    SessionLog, SessionPlan, SessionSummary, SongBank, TimedAction, TimedEvent,
};
use crate::audio::{detect_notes, synthesize_melody, DetectionConfig, Timbre};
use crate::instrument::{Melody, NoteId, XylophoneModel};
use crate::trajectory::{
    execute_sim_pair, generate_trajectory, strike_configs, Arm, KinematicChain, Placement, StrikeTable,
    TrajectoryError, TrajectoryOptions,
};

/// Scripted participant behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "persona")]
pub enum Persona {
    /// Waits for the window and plays every target exactly.
    Perfect,
    /// Wrong notes, timing jitter and the odd early start.
    Noisy { wrong_note_p: f64, early_p: f64 },
    /// Never plays or answers.
    Silent,
    /// Cycles well-done, light interrupt, heavy interrupt, indifferent over practice conversations.
    Cycle,
}

impl std::str::FromStr for Persona {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perfect" => Ok(Self::Perfect),
            "noisy" => Ok(Self::Noisy { wrong_note_p: 0.15, early_p: 0.1 }),
            "silent" => Ok(Self::Silent),
            "cycle" => Ok(Self::Cycle),
            other => Err(SessionError::Config(format!("unknown persona {other:?}"))),
        }
    }
}

/// The notes the scripted participant plays when free play opens.
pub const FREE_PLAY_MOTIF: &str = "15b";
const NOTE_SPACING_S: f64 = 0.45;
const FIRST_NOTE_S: f64 = 0.5;
const ANSWER_DELAY_S: f64 = 1.0;

#[derive(Clone)]
pub struct RunOptions {
    pub persona: Persona,
    pub seed: u64,
    pub timing: RobotTiming,
    /// Route participant strikes through synthesis and note detection.
    pub audio: bool,
    /// Robot demonstrations are run through trajectory generation and simulation.
    pub robot: Option<Arc<RobotRig>>,
    pub max_session_s: f64,
}

impl RunOptions {
    pub fn new(persona: Persona, seed: u64) -> Self {
        Self { persona, seed, timing: RobotTiming::default(), audio: false, robot: None, max_session_s: 4.0 * 3600.0 }
    }
}

/// Instrument, arms and solved strike poses used to act out demonstrations.
pub struct RobotRig {
    pub model: XylophoneModel,
    pub left: KinematicChain,
    pub right: KinematicChain,
    pub placement: Placement,
    pub table: StrikeTable,
    pub opts: TrajectoryOptions,
}

impl RobotRig {
    pub fn new(model: XylophoneModel, placement: Placement, opts: TrajectoryOptions) -> Result<Self, TrajectoryError> {
        let left = KinematicChain::default_arm(Arm::Left);
        let right = KinematicChain::default_arm(Arm::Right);
        let table = strike_configs(&model, &left, &right, &placement, &opts)?;
        Ok(Self { model, left, right, placement, table, opts })
    }

    pub fn canonical() -> Result<Self, TrajectoryError> {
        Self::new(XylophoneModel::default(), Placement::default(), TrajectoryOptions::default())
    }

    /// Notes that sound when the robot plays `notes`; empty if planning fails.
    pub fn play(&self, notes: &[NoteId], tempo_bpm: f64) -> Vec<NoteId> {
        let Ok(melody) = Melody::new(notes.to_vec(), tempo_bpm) else { return Vec::new() };
        match generate_trajectory(&melody, &self.table, &self.opts) {
            Ok(trajs) => execute_sim_pair(&trajs, &self.left, &self.right, &self.model, &self.placement)
                .into_iter()
                .map(|e| e.note)
                .collect(),
            Err(_) => Vec::new(),
        }
    }
}

pub struct ScriptedRun {
    pub log: SessionLog,
    pub summary: SessionSummary,
    pub conversations: Vec<Conversation>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Behaviour {
    WellDone,
    Light,
    Heavy,
    Indifferent,
}

struct Participant {
    persona: Persona,
    rng: ChaCha8Rng,
    cue_s: f64,
    in_game: bool,
    target: Vec<NoteId>,
    behaviour: Behaviour,
    practice_count: usize,
    modes_chosen: [bool; 3],
}

impl Participant {
    fn new(persona: Persona, seed: u64, cue_s: f64) -> Self {
        Self {
            persona,
            // Separate stream from the engine's.
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7061_7274_6963_6970),
            cue_s,
            in_game: false,
            target: Vec::new(),
            behaviour: Behaviour::WellDone,
            practice_count: 0,
            modes_chosen: [false; 3],
        }
    }

    fn play(&mut self, notes: &[NoteId], start: f64) -> Vec<TimedEvent> {
        let mut out = Vec::new();
        for (i, &n) in notes.iter().enumerate() {
            let mut note = n;
            let mut t = start + i as f64 * NOTE_SPACING_S;
            if let Persona::Noisy { wrong_note_p, .. } = self.persona {
                if self.rng.random_bool(wrong_note_p) {
                    let v = self.rng.random_range(1..=10u8);
                    note = NoteId::new(if v >= n.value() { v + 1 } else { v }).expect("in range");
                }
                t += self.rng.random_range(-0.05..0.05);
            }
            out.push(TimedEvent::new(t, SessionEvent::Strike { note }));
        }
        out
    }

    fn react(&mut self, a: &TimedAction) -> Vec<TimedEvent> {
        let t = a.t_s;
        if self.persona == Persona::Silent {
            return Vec::new();
        }
        match &a.action {
            SessionAction::PhaseBegin { phase } => {
                self.in_game = phase.is_gameplay();
                Vec::new()
            }
            SessionAction::DemonstrateMelody { notes, expects_repeat: true, .. } => {
                self.target = notes.clone();
                self.behaviour = match self.persona {
                    Persona::Cycle if !self.in_game => {
                        let b = [Behaviour::WellDone, Behaviour::Light, Behaviour::Heavy, Behaviour::Indifferent]
                            [self.practice_count % 4];
                        self.practice_count += 1;
                        b
                    }
                    Persona::Noisy { early_p, .. } if self.rng.random_bool(early_p) => Behaviour::Light,
                    _ => Behaviour::WellDone,
                };
                if self.behaviour == Behaviour::Heavy {
                    vec![TimedEvent::new(t + 0.2, SessionEvent::Strike { note: notes[0] })]
                } else {
                    Vec::new()
                }
            }
            SessionAction::VerbalCue { .. } if self.behaviour == Behaviour::Light => {
                let target = self.target.clone();
                self.play(&target, t + self.cue_s - 0.5)
            }
            SessionAction::OpenResponseWindow { free_play: false, .. }
                if matches!(self.behaviour, Behaviour::WellDone | Behaviour::Heavy) =>
            {
                let target = self.target.clone();
                self.play(&target, t + FIRST_NOTE_S)
            }
            SessionAction::OpenResponseWindow { free_play: true, .. } => {
                let motif = crate::instrument::parse_notes(FREE_PLAY_MOTIF).expect("valid motif");
                self.play(&motif, t + FIRST_NOTE_S)
            }
            SessionAction::GamePrompt { prompt, .. } => {
                let ev = match prompt {
                    PromptKind::Mode => match self.modes_chosen.iter().position(|c| !c) {
                        Some(m) => {
                            self.modes_chosen[m] = true;
                            SessionEvent::ModeSelected { mode: m as u8 + 1 }
                        }
                        None => SessionEvent::StopRequested,
                    },
                    PromptKind::Emotion => SessionEvent::EmotionAnswer { text: "happy".into() },
                    PromptKind::Rating => SessionEvent::Rating { value: 4 },
                };
                vec![TimedEvent::new(t + ANSWER_DELAY_S, ev)]
            }
            _ => Vec::new(),
        }
    }
}

/// Replace a burst of strikes by what the detector hears from their synthesized audio.
fn through_audio(events: Vec<TimedEvent>, seed: u64) -> Vec<TimedEvent> {
    let strikes: Vec<(f64, NoteId)> = events
        .iter()
        .filter_map(|e| match e.event {
            SessionEvent::Strike { note } => Some((e.t_s, note)),
            _ => None,
        })
        .collect();
    if strikes.is_empty() {
        return events;
    }
    let t0 = strikes[0].0;
    let melody = Melody::with_onsets(
        strikes.iter().map(|s| s.1).collect(),
        strikes.iter().map(|s| s.0 - t0).collect(),
        120.0,
    );
    let Ok(melody) = melody else { return events };
    let clip = synthesize_melody(&melody, &Timbre::default().with_noise(0.01, seed));
    let detected = detect_notes(&clip, &DetectionConfig::default()).unwrap_or_default();
    let mut out: Vec<TimedEvent> =
        events.into_iter().filter(|e| !matches!(e.event, SessionEvent::Strike { .. })).collect();
    out.extend(detected.into_iter().map(|d| TimedEvent::new(t0 + d.onset_s, SessionEvent::Strike { note: d.note })));
    out
}

/// Run a whole session against a scripted participant on a simulated clock.
pub fn run_scripted(
    plan: SessionPlan,
    config: SessionConfig,
    bank: SongBank,
    opts: &RunOptions,
) -> Result<ScriptedRun, SessionError> {
    let mut driver = Driver::new(plan, config, bank, opts.seed, opts.timing)?;
    if let Some(rig) = &opts.robot {
        let rig = Arc::clone(rig);
        driver = driver.with_imitator(Box::new(move |notes, tempo| rig.play(notes, tempo)));
    }
    let mut who = Participant::new(opts.persona, opts.seed, opts.timing.cue_s);
    // Participant events keyed by (time bits, insertion order); times are non-negative.
    let mut queue: BTreeMap<(u64, u64), TimedEvent> = BTreeMap::new();
    let mut order = 0u64;
    let mut burst = 0u64;

    let mut pending = driver.submit(TimedEvent::new(0.0, SessionEvent::PhaseStart))?;
    loop {
        for a in &pending {
            let mut evs = who.react(a);
            if opts.audio {
                burst += 1;
                evs = through_audio(evs, opts.seed.wrapping_add(burst));
            }
            for ev in evs {
                queue.insert((ev.t_s.max(0.0).to_bits(), order), ev);
                order += 1;
            }
        }
        if driver.engine().is_done() {
            break;
        }
        let next_p = queue.keys().next().map(|k| f64::from_bits(k.0));
        let next_r = driver.next_timer();
        let t_now = match (next_p, next_r) {
            (None, None) => return Err(SessionError::Stalled(driver.log().records.last().map_or(0.0, |r| r.t_s))),
            (Some(p), Some(r)) => p.min(r),
            (Some(p), None) => p,
            (None, Some(r)) => r,
        };
        if t_now > opts.max_session_s {
            return Err(SessionError::Stalled(t_now));
        }
        // Participant first on ties.
        let result = if next_p.is_some_and(|p| next_r.is_none_or(|r| p <= r)) {
            let key = *queue.keys().next().expect("nonempty");
            let mut ev = queue.remove(&key).expect("present");
            ev.t_s = ev.t_s.max(0.0);
            driver.submit(ev)
        } else {
            driver.fire_timer().expect("timer is current")
        };
        // A late or out-of-place answer is logged and otherwise ignored.
        pending = result.unwrap_or_default();
    }
    let summary = driver.engine().summary();
    let conversations = driver.engine().conversations().to_vec();
    Ok(ScriptedRun { log: driver.into_log(), summary, conversations })
}
