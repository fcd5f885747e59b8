use serde::{Deserialize, Serialize};

use super::log::{LogHeader, GRADING_NOTE, LOG_VERSION};
use super::{
    SessionAction, SessionConfig, SessionEngine, SessionError, SessionEvent, SessionLog, SessionPlan, SongBank,
    TimedAction, TimedEvent,
};
use crate::instrument::{Melody, NoteId};

/// How long the robot takes for each of its own steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotTiming {
    pub cue_s: f64,
    pub feedback_s: f64,
    pub prompt_timeout_s: f64,
    /// Added to a melody's duration before the demonstration counts as done.
    pub demo_tail_s: f64,
}

impl Default for RobotTiming {
    fn default() -> Self {
        Self { cue_s: 2.0, feedback_s: 2.0, prompt_timeout_s: 15.0, demo_tail_s: 0.5 }
    }
}

/// Plays a demonstration and reports the notes that actually sounded.
pub type Imitator = Box<dyn FnMut(&[NoteId], f64) -> Vec<NoteId> + Send>;

struct Timer {
    due_s: f64,
    serial: u64,
    event: SessionEvent,
}

/// Engine plus the robot-side scheduler and the event log.
pub struct Driver {
    engine: SessionEngine,
    timing: RobotTiming,
    log: SessionLog,
    timer: Option<Timer>,
    imitator: Option<Imitator>,
}

impl Driver {
    pub fn new(
        plan: SessionPlan,
        config: SessionConfig,
        bank: SongBank,
        seed: u64,
        timing: RobotTiming,
    ) -> Result<Self, SessionError> {
        let mut log = SessionLog::default();
        log.push_header(&LogHeader {
            version: LOG_VERSION,
            grading: GRADING_NOTE.into(),
            seed,
            plan: plan.clone(),
            config: config.clone(),
            timing,
            bank: bank.clone(),
        });
        Ok(Self { engine: SessionEngine::new(plan, config, bank, seed)?, timing, log, timer: None, imitator: None })
    }

    pub fn with_imitator(mut self, imitator: Imitator) -> Self {
        self.imitator = Some(imitator);
        self
    }

    pub fn engine(&self) -> &SessionEngine {
        &self.engine
    }

    pub fn timing(&self) -> RobotTiming {
        self.timing
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    /// Log and apply one event; rejected events are logged with an error record.
    pub fn submit(&mut self, ev: TimedEvent) -> Result<Vec<TimedAction>, SessionError> {
        self.log.push_event(&ev);
        match self.engine.advance(&ev) {
            Ok(actions) => {
                for a in &actions {
                    self.log.push_action(a);
                    self.arm(a);
                }
                Ok(actions)
            }
            Err(e) => {
                self.log.push_error(ev.t_s, &e);
                Err(e)
            }
        }
    }

    fn arm(&mut self, a: &TimedAction) {
        let t = a.t_s;
        let (delay, event) = match &a.action {
            SessionAction::DemonstrateMelody { notes, tempo_bpm, .. } => {
                let played = self.imitator.as_mut().map(|f| f(notes, *tempo_bpm));
                let dur = Melody::new(notes.clone(), *tempo_bpm).map(|m| m.duration_s()).unwrap_or(0.0);
                (dur + self.timing.demo_tail_s, SessionEvent::DemonstrationDone { played })
            }
            SessionAction::VerbalCue { .. } => (self.timing.cue_s, SessionEvent::CueIssued),
            SessionAction::OpenResponseWindow { duration_s, .. } => (*duration_s, SessionEvent::WindowElapsed),
            SessionAction::Feedback { .. } => (self.timing.feedback_s, SessionEvent::FeedbackDone),
            SessionAction::GamePrompt { .. } => (self.timing.prompt_timeout_s, SessionEvent::PromptTimeout),
            _ => return,
        };
        self.timer = Some(Timer { due_s: t + delay, serial: self.engine.stage_serial(), event });
    }

    /// Due time of the pending robot event, if it is still current.
    pub fn next_timer(&self) -> Option<f64> {
        self.timer.as_ref().filter(|tm| tm.serial == self.engine.stage_serial()).map(|tm| tm.due_s)
    }

    pub fn fire_timer(&mut self) -> Option<Result<Vec<TimedAction>, SessionError>> {
        let tm = self.timer.take().filter(|tm| tm.serial == self.engine.stage_serial())?;
        Some(self.submit(TimedEvent::new(tm.due_s, tm.event)))
    }
}
