use std::collections::{BTreeMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_melody, grade_turn_taking, normalize_scores, practice_chunks, Conversation, ConversationKind,
    MelodyStyle, Phase, PromptKind, SessionAction, SessionConfig, SessionError, SessionEvent, SessionKind,
    SessionPlan, Song, SongBank, Strike, TimedAction, TimedEvent, TurnTakingGrade,
};
use crate::instrument::NoteId;
use crate::scoring::{practice_policy, AccuracyTracker, PracticeDecision, TrialRecord, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Idle,
    Demonstrating,
    Cueing,
    Window,
    Feedback,
    AwaitMode,
    AwaitEmotion,
    FreePlay,
    AwaitRating,
    Done,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Idle => "idle",
            Stage::Demonstrating => "demonstrating",
            Stage::Cueing => "cueing",
            Stage::Window => "window",
            Stage::Feedback => "feedback",
            Stage::AwaitMode => "await_mode",
            Stage::AwaitEmotion => "await_emotion",
            Stage::FreePlay => "free_play",
            Stage::AwaitRating => "await_rating",
            Stage::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticeAccuracy {
    pub phase: Phase,
    pub correct: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub kind: SessionKind,
    pub song: String,
    pub conversations: u32,
    pub grades: Vec<TurnTakingGrade>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn_taking_percent: Option<f64>,
    pub accuracy: Vec<PracticeAccuracy>,
    pub modes_played: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversation: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn_taking_percent: Option<f64>,
    pub done: bool,
}

struct Practice {
    kind: ConversationKind,
    queue: VecDeque<Vec<NoteId>>,
    cycle: Vec<Vec<NoteId>>,
    next_extra: usize,
    extra_rounds: u32,
}

#[derive(Default)]
struct Game {
    stopping: bool,
}

enum Activity {
    None,
    Practice(Practice),
    Game(Game),
}

/// The single-writer session state machine.
pub struct SessionEngine {
    plan: SessionPlan,
    config: SessionConfig,
    bank: SongBank,
    rng: ChaCha8Rng,
    phase_idx: Option<usize>,
    stage: Stage,
    serial: u64,
    activity: Activity,
    current: Option<Conversation>,
    closed: Vec<Conversation>,
    trackers: BTreeMap<Phase, AccuracyTracker>,
    modes_played: [u32; 3],
    next_id: u32,
}

impl SessionEngine {
    pub fn new(plan: SessionPlan, config: SessionConfig, bank: SongBank, seed: u64) -> Result<Self, SessionError> {
        config.validate()?;
        plan.song.melody()?;
        Ok(Self {
            plan,
            config,
            bank,
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase_idx: None,
            stage: Stage::Idle,
            serial: 0,
            activity: Activity::None,
            current: None,
            closed: Vec::new(),
            trackers: BTreeMap::new(),
            modes_played: [0; 3],
            next_id: 0,
        })
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Bumped on every stage change; timers armed in an older stage are stale.
    pub fn stage_serial(&self) -> u64 {
        self.serial
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    pub fn phase(&self) -> Option<Phase> {
        self.phase_idx.map(|i| self.plan.phases[i])
    }

    pub fn current(&self) -> Option<&Conversation> {
        self.current.as_ref()
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.closed
    }

    pub fn grades(&self) -> Vec<TurnTakingGrade> {
        self.closed.iter().filter_map(|c| c.grade).collect()
    }

    pub fn summary(&self) -> SessionSummary {
        let grades = self.grades();
        SessionSummary {
            kind: self.plan.kind,
            song: self.plan.song.name.clone(),
            conversations: self.closed.len() as u32,
            turn_taking_percent: normalize_scores(&grades).ok(),
            grades,
            accuracy: self
                .trackers
                .iter()
                .map(|(&phase, t)| PracticeAccuracy { phase, correct: t.correct(), total: t.total() })
                .collect(),
            modes_played: self.modes_played,
        }
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            phase: self.phase(),
            stage: self.stage,
            conversation: self.current.as_ref().map(|c| c.id),
            window: self.current.as_ref().and_then(|c| c.window),
            turn_taking_percent: normalize_scores(&self.grades()).ok(),
            done: self.is_done(),
        }
    }

    pub fn advance(&mut self, ev: &TimedEvent) -> Result<Vec<TimedAction>, SessionError> {
        let t = ev.t_s;
        let mut out = Vec::new();
        match (&ev.event, self.stage) {
            (SessionEvent::Strike { note }, _) => self.on_strike(*note, t),
            (SessionEvent::PhaseStart, Stage::Idle) => self.enter_phase(0, t, &mut out)?,
            (SessionEvent::DemonstrationDone { .. }, Stage::Demonstrating) => self.on_demo_done(t, &mut out),
            (SessionEvent::CueIssued, Stage::Cueing) => {
                let conv = self.current.as_mut().expect("cueing has a conversation");
                let dur = self.config.window_for(conv.target.len());
                conv.window = Some((t, t + dur));
                out.push(SessionAction::EyeFlash);
                out.push(SessionAction::OpenResponseWindow { duration_s: dur, free_play: false });
                self.set_stage(Stage::Window);
            }
            (SessionEvent::WindowElapsed, Stage::Window) => self.on_window_closed(t, &mut out)?,
            (SessionEvent::WindowElapsed, Stage::FreePlay) => self.on_free_play_closed(t, &mut out),
            (SessionEvent::FeedbackDone, Stage::Feedback) => self.on_feedback_done(t, &mut out)?,
            (SessionEvent::ModeSelected { mode }, stage) => {
                if !self.phase().is_some_and(Phase::is_gameplay) {
                    return Err(SessionError::IllegalPhase(stage.name().into()));
                }
                if stage != Stage::AwaitMode || !(1..=3).contains(mode) {
                    return Err(self.illegal(&ev.event));
                }
                self.start_mode(*mode, t, &mut out);
            }
            (SessionEvent::EmotionAnswer { text }, Stage::AwaitEmotion) => {
                self.current.as_mut().expect("prompt has a conversation").answer = Some(text.clone());
                self.after_emotion(t, &mut out);
            }
            (SessionEvent::Rating { value }, Stage::AwaitRating) if (1..=5).contains(value) => {
                self.current.as_mut().expect("prompt has a conversation").rating = Some(*value);
                self.give_feedback("Thank you for rating my playing!", None, t, &mut out);
            }
            (SessionEvent::PromptTimeout, Stage::AwaitMode) => self.on_stop(t, &mut out)?,
            (SessionEvent::PromptTimeout, Stage::AwaitEmotion) => self.after_emotion(t, &mut out),
            (SessionEvent::PromptTimeout, Stage::AwaitRating) => {
                self.give_feedback("Thank you for playing with me!", None, t, &mut out)
            }
            (SessionEvent::StopRequested, stage) if self.phase().is_some_and(Phase::is_gameplay) => {
                if let Activity::Game(g) = &mut self.activity {
                    g.stopping = true;
                }
                if stage == Stage::AwaitMode {
                    self.on_stop(t, &mut out)?;
                }
            }
            (event, _) => return Err(self.illegal(event)),
        }
        Ok(out.into_iter().map(|action| TimedAction { t_s: t, action }).collect())
    }

    fn illegal(&self, event: &SessionEvent) -> SessionError {
        SessionError::IllegalEvent { stage: self.stage.name().into(), event: event.name().into() }
    }

    fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
        self.serial += 1;
    }

    fn on_strike(&mut self, note: NoteId, t: f64) {
        let demonstrating = self.stage == Stage::Demonstrating;
        if let Some(conv) = self.current.as_mut() {
            conv.strikes.push(Strike { note, t_s: t });
            if demonstrating && conv.kind != ConversationKind::FreePlay {
                conv.interrupted = true;
            }
        }
    }

    fn enter_phase(&mut self, idx: usize, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        let Some(&phase) = self.plan.phases.get(idx) else {
            self.activity = Activity::None;
            self.set_stage(Stage::Done);
            out.push(SessionAction::SessionDone { summary: self.summary() });
            return Ok(());
        };
        self.phase_idx = Some(idx);
        out.push(SessionAction::PhaseBegin { phase });
        let notes = self.plan.melody()?.notes;
        match phase {
            Phase::WarmUp => {
                let cycle = practice_chunks(&notes, 1);
                self.start_practice(ConversationKind::WarmUp, cycle, self.config.warmup_trials);
            }
            Phase::SinglePractice => {
                let cycle = practice_chunks(&notes, self.plan.practice_units[0]);
                self.start_practice(ConversationKind::Practice, cycle, self.config.practice_trials);
            }
            Phase::MusicPractice => {
                let mut cycle = Vec::new();
                for &unit in &self.plan.practice_units {
                    let chunks = practice_chunks(&notes, unit);
                    cycle.extend((0..self.config.ladder_trials).map(|i| chunks[i % chunks.len()].clone()));
                }
                let n = cycle.len();
                self.start_practice(ConversationKind::Practice, cycle, n);
            }
            Phase::MusicGameplay | Phase::Gameplay => self.activity = Activity::Game(Game::default()),
        }
        self.trackers.entry(phase).or_insert_with(|| {
            AccuracyTracker::new(self.config.accuracy_threshold).expect("validated threshold")
        });
        self.next_step(t, out)
    }

    fn start_practice(&mut self, kind: ConversationKind, cycle: Vec<Vec<NoteId>>, trials: usize) {
        let queue = (0..trials).map(|i| cycle[i % cycle.len()].clone()).collect();
        self.activity = Activity::Practice(Practice {
            kind,
            queue,
            next_extra: trials % cycle.len(),
            cycle,
            extra_rounds: 0,
        });
    }

    /// Start the next conversation of the current activity, or move on.
    fn next_step(&mut self, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        let phase = self.phase().expect("inside a phase");
        match &mut self.activity {
            Activity::Practice(p) => {
                if p.queue.is_empty() && p.kind == ConversationKind::Practice && p.extra_rounds < self.config.max_extra_rounds {
                    let tracker = &self.trackers[&phase];
                    if let PracticeDecision::ExtraTrials(k) = practice_policy(tracker)? {
                        p.extra_rounds += 1;
                        for _ in 0..k {
                            p.queue.push_back(p.cycle[p.next_extra % p.cycle.len()].clone());
                            p.next_extra += 1;
                        }
                        out.push(SessionAction::ExtraPractice { trials: k });
                    }
                }
                match p.queue.pop_front() {
                    Some(target) => {
                        let kind = p.kind;
                        let hint = self.plan.color_hint && kind == ConversationKind::Practice;
                        self.open_demo(phase, kind, target, self.plan.song.tempo_bpm, hint, true, t, out);
                    }
                    None => self.finish_phase(t, out)?,
                }
            }
            Activity::Game(g) => {
                if g.stopping {
                    match self.modes_played.iter().position(|&n| n == 0) {
                        Some(m) => self.start_mode(m as u8 + 1, t, out),
                        None => self.finish_phase(t, out)?,
                    }
                } else {
                    self.set_stage(Stage::AwaitMode);
                    out.push(SessionAction::GamePrompt {
                        prompt: PromptKind::Mode,
                        text: "Which game would you like to play: 1, 2 or 3?".into(),
                    });
                }
            }
            Activity::None => self.finish_phase(t, out)?,
        }
        Ok(())
    }

    fn finish_phase(&mut self, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        let idx = self.phase_idx.expect("inside a phase");
        out.push(SessionAction::PhaseComplete { phase: self.plan.phases[idx] });
        self.enter_phase(idx + 1, t, out)
    }

    #[allow(clippy::too_many_arguments)]
    fn open_demo(
        &mut self,
        phase: Phase,
        kind: ConversationKind,
        target: Vec<NoteId>,
        tempo_bpm: f64,
        color_hint: bool,
        expects_repeat: bool,
        t: f64,
        out: &mut Vec<SessionAction>,
    ) {
        let mut conv = Conversation::new(self.next_id, phase, kind, target.clone());
        self.next_id += 1;
        conv.movements[0].start_s = Some(t);
        self.current = Some(conv);
        out.push(SessionAction::DemonstrateMelody { notes: target, tempo_bpm, color_hint, expects_repeat });
        self.set_stage(Stage::Demonstrating);
    }

    fn on_demo_done(&mut self, t: f64, out: &mut Vec<SessionAction>) {
        let conv = self.current.as_mut().expect("demonstrating has a conversation");
        match conv.kind {
            ConversationKind::FreePlay => {
                // The robot's imitation is the middle movement.
                conv.movements[1].end_s = Some(t);
                conv.movements[2].start_s = Some(t);
                self.set_stage(Stage::AwaitRating);
                out.push(SessionAction::GamePrompt {
                    prompt: PromptKind::Rating,
                    text: "How well did I copy you, from 1 to 5?".into(),
                });
            }
            kind => {
                conv.movements[0].end_s = Some(t);
                conv.movements[1].start_s = Some(t);
                if matches!(kind, ConversationKind::Listen | ConversationKind::Playback) {
                    self.set_stage(Stage::AwaitEmotion);
                    out.push(SessionAction::GamePrompt {
                        prompt: PromptKind::Emotion,
                        text: "How did that melody make you feel?".into(),
                    });
                } else {
                    self.issue_cue(out);
                }
            }
        }
    }

    fn issue_cue(&mut self, out: &mut Vec<SessionAction>) {
        out.push(SessionAction::VerbalCue { text: self.config.cue_text.clone() });
        self.set_stage(Stage::Cueing);
    }

    fn after_emotion(&mut self, t: f64, out: &mut Vec<SessionAction>) {
        let conv = self.current.as_ref().expect("prompt has a conversation");
        if conv.kind == ConversationKind::Playback {
            self.issue_cue(out);
        } else {
            self.give_feedback("Thank you for sharing!", None, t, out);
        }
    }

    fn on_window_closed(&mut self, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        let phase = self.phase().expect("inside a phase");
        let conv = self.current.as_mut().expect("window has a conversation");
        conv.movements[1].end_s = Some(t);
        let record = TrialRecord::score(conv.target.clone(), conv.attempt(), t)?;
        let verdict = record.verdict;
        conv.trial = Some(record.clone());
        let kind = conv.kind;
        out.push(SessionAction::TrialScored { record });
        if kind == ConversationKind::WarmUp {
            // Scored for the record; warm-up gives no accuracy feedback.
            self.trackers.get_mut(&phase).expect("tracker exists").record(verdict);
            self.give_feedback("Nice playing! Let's keep going.", None, t, out);
            return Ok(());
        }
        if kind == ConversationKind::Practice {
            self.trackers.get_mut(&phase).expect("tracker exists").record(verdict);
        }
        let text = match verdict {
            Verdict::Pass => "Well done!",
            Verdict::Fail => "Good try! Let's practice that again.",
        };
        self.give_feedback(text, Some(verdict), t, out);
        Ok(())
    }

    fn on_free_play_closed(&mut self, t: f64, out: &mut Vec<SessionAction>) {
        let conv = self.current.as_mut().expect("free play has a conversation");
        conv.movements[0].end_s = Some(t);
        conv.movements[1].start_s = Some(t);
        conv.target = conv.strikes.iter().map(|s| s.note).collect();
        if conv.target.is_empty() {
            conv.movements[1].end_s = Some(t);
            self.give_feedback("I didn't hear anything this time. Maybe next time!", None, t, out);
            return;
        }
        let notes = conv.target.clone();
        let tempo = self.plan.song.tempo_bpm;
        out.push(SessionAction::DemonstrateMelody { notes, tempo_bpm: tempo, color_hint: false, expects_repeat: false });
        self.set_stage(Stage::Demonstrating);
    }

    fn give_feedback(&mut self, text: &str, verdict: Option<Verdict>, t: f64, out: &mut Vec<SessionAction>) {
        let conv = self.current.as_mut().expect("feedback has a conversation");
        for m in &mut conv.movements[..2] {
            m.start_s.get_or_insert(t);
            m.end_s.get_or_insert(t);
        }
        conv.movements[2].start_s.get_or_insert(t);
        out.push(SessionAction::Feedback { text: text.into(), verdict });
        self.set_stage(Stage::Feedback);
    }

    fn on_feedback_done(&mut self, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        let mut conv = self.current.take().expect("feedback has a conversation");
        conv.movements[2].end_s = Some(t);
        if conv.kind.graded() {
            conv.grade = Some(grade_turn_taking(&conv)?);
        }
        out.push(SessionAction::ConversationClosed { id: conv.id, grade: conv.grade });
        self.closed.push(conv);
        self.next_step(t, out)
    }

    fn on_stop(&mut self, t: f64, out: &mut Vec<SessionAction>) -> Result<(), SessionError> {
        if let Activity::Game(g) = &mut self.activity {
            g.stopping = true;
        }
        self.next_step(t, out)
    }

    fn start_mode(&mut self, mode: u8, t: f64, out: &mut Vec<SessionAction>) {
        let phase = self.phase().expect("inside a phase");
        self.modes_played[mode as usize - 1] += 1;
        match mode {
            1 => {
                let song: Song = self.bank.songs.choose(&mut self.rng).expect("bank is nonempty").clone();
                let notes = song.melody().map(|m| m.notes).unwrap_or_default();
                self.open_demo(phase, ConversationKind::Listen, notes, song.tempo_bpm, false, false, t, out);
            }
            2 => {
                let style = if self.rng.random_bool(0.5) { MelodyStyle::Consonant } else { MelodyStyle::Dissonant };
                let notes = generate_melody(&mut self.rng, style, self.config.mode2_length);
                let tempo = self.plan.song.tempo_bpm;
                self.open_demo(phase, ConversationKind::Playback, notes, tempo, false, true, t, out);
            }
            _ => {
                let mut conv = Conversation::new(self.next_id, phase, ConversationKind::FreePlay, Vec::new());
                self.next_id += 1;
                conv.movements[0].start_s = Some(t);
                conv.window = Some((t, t + self.config.free_play_s));
                self.current = Some(conv);
                out.push(SessionAction::OpenResponseWindow { duration_s: self.config.free_play_s, free_play: true });
                self.set_stage(Stage::FreePlay);
            }
        }
        if let Some(c) = self.current.as_mut() {
            c.mode = Some(mode);
        }
    }
}
