//! Participant-channel protocol and the transport-free session service.
//!
//! Every frame is one JSON object `{"type": ..., "body": ...}`. The caller
//! owns the clock: it passes session time (which stops while the participant
//! is disconnected) into every call.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::{render_hex, NoteId};
use crate::scoring::Verdict;
use crate::session::{
    Driver, Phase, PromptKind, RobotTiming, SessionAction, SessionConfig, SessionError, SessionEvent, SessionLog,
    SessionPlan, SongBank, Stage, TimedAction, TimedEvent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBody {
    pub t_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conversation: Option<u32>,
    pub window_open: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_remaining_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn_taking_percent: Option<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "body")]
pub enum ServerMessage {
    Cue { text: String, window_s: f64, free_play: bool },
    Demonstrate { notes: String, tempo_bpm: f64, color_hint: bool, expects_repeat: bool },
    Feedback {
        text: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        verdict: Option<Verdict>,
        #[serde(skip_serializing_if = "Option::is_none")]
        likelihood: Option<f64>,
    },
    State(StateBody),
    GamePrompt { prompt: PromptKind, text: String, options: Vec<u8> },
    Error { message: String },
}

impl ServerMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Cue { .. } => "cue",
            Self::Demonstrate { .. } => "demonstrate",
            Self::Feedback { .. } => "feedback",
            Self::State(_) => "state",
            Self::GamePrompt { .. } => "game_prompt",
            Self::Error { .. } => "error",
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self::Error { message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "body")]
pub enum ClientMessage {
    /// `note` is one hex digit `1`..`b`; `t_s` is the client's own clock and only informative.
    Strike {
        note: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_s: Option<f64>,
    },
    ModeSelect { mode: u8 },
    EmotionAnswer { text: String },
    Rating { value: u8 },
    Join { participant_id: String },
    /// Ends gameplay once every mode has been played.
    Stop,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
}

const CLIENT_TYPES: [&str; 6] = ["strike", "mode_select", "emotion_answer", "rating", "join", "stop"];

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let ty = v
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| ProtocolError::Malformed("missing \"type\"".into()))?;
        if !CLIENT_TYPES.contains(&ty) {
            return Err(ProtocolError::UnknownType(ty.to_string()));
        }
        serde_json::from_value(v).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

const FREE_PLAY_TEXT: &str = "Play anything you like!";

/// Translate engine actions into participant messages.
pub fn to_messages(actions: &[TimedAction], cue_text: &str) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    let mut likelihood = None;
    for a in actions {
        match &a.action {
            SessionAction::DemonstrateMelody { notes, tempo_bpm, color_hint, expects_repeat } => {
                out.push(ServerMessage::Demonstrate {
                    notes: render_hex(notes),
                    tempo_bpm: *tempo_bpm,
                    color_hint: *color_hint,
                    expects_repeat: *expects_repeat,
                })
            }
            SessionAction::OpenResponseWindow { duration_s, free_play } => out.push(ServerMessage::Cue {
                text: if *free_play { FREE_PLAY_TEXT.into() } else { cue_text.into() },
                window_s: *duration_s,
                free_play: *free_play,
            }),
            SessionAction::TrialScored { record } => likelihood = Some(record.likelihood),
            SessionAction::Feedback { text, verdict } => out.push(ServerMessage::Feedback {
                text: text.clone(),
                verdict: *verdict,
                likelihood: likelihood.take(),
            }),
            SessionAction::GamePrompt { prompt, text } => out.push(ServerMessage::GamePrompt {
                prompt: *prompt,
                text: text.clone(),
                options: match prompt {
                    PromptKind::Mode => vec![1, 2, 3],
                    PromptKind::Rating => vec![1, 2, 3, 4, 5],
                    PromptKind::Emotion => Vec::new(),
                },
            }),
            _ => {}
        }
    }
    out
}

/// One participant's session behind the protocol.
pub struct ServiceSession {
    driver: Driver,
    participant: Option<String>,
    cue_text: String,
}

impl ServiceSession {
    pub fn new(
        plan: SessionPlan,
        config: SessionConfig,
        bank: SongBank,
        seed: u64,
        timing: RobotTiming,
    ) -> Result<Self, SessionError> {
        let cue_text = config.cue_text.clone();
        Ok(Self { driver: Driver::new(plan, config, bank, seed, timing)?, participant: None, cue_text })
    }

    pub fn log(&self) -> &SessionLog {
        self.driver.log()
    }

    pub fn is_done(&self) -> bool {
        self.driver.engine().is_done()
    }

    pub fn participant(&self) -> Option<&str> {
        self.participant.as_deref()
    }

    pub fn state(&self, t_s: f64) -> ServerMessage {
        let snap = self.driver.engine().snapshot();
        let open = matches!(snap.stage, Stage::Window | Stage::FreePlay);
        ServerMessage::State(StateBody {
            t_s,
            participant_id: self.participant.clone(),
            phase: snap.phase,
            stage: snap.stage,
            conversation: snap.conversation,
            window_open: open,
            window_remaining_s: snap.window.filter(|_| open).map(|w| (w.1 - t_s).max(0.0)),
            turn_taking_percent: snap.turn_taking_percent,
            done: snap.done,
        })
    }

    /// Handle one frame from the participant at session time `t_s`.
    pub fn on_frame(&mut self, text: &str, t_s: f64) -> Vec<ServerMessage> {
        match ClientMessage::parse(text) {
            Ok(msg) => self.on_message(msg, t_s),
            Err(e) => vec![ServerMessage::error(e.to_string())],
        }
    }

    pub fn on_message(&mut self, msg: ClientMessage, t_s: f64) -> Vec<ServerMessage> {
        let event = match msg {
            ClientMessage::Join { participant_id } => return self.join(participant_id, t_s),
            _ if self.participant.is_none() => return vec![ServerMessage::error("join before sending events")],
            ClientMessage::Strike { note, .. } => {
                let mut chars = note.chars();
                match (chars.next().and_then(NoteId::from_hex), chars.next()) {
                    (Some(n), None) => SessionEvent::Strike { note: n },
                    _ => return vec![ServerMessage::error(format!("bad note {note:?}; expected one digit 1..b"))],
                }
            }
            ClientMessage::ModeSelect { mode } => SessionEvent::ModeSelected { mode },
            ClientMessage::EmotionAnswer { text } => SessionEvent::EmotionAnswer { text },
            ClientMessage::Rating { value } => SessionEvent::Rating { value },
            ClientMessage::Stop => SessionEvent::StopRequested,
        };
        let mut out = self.poll(t_s);
        out.extend(self.submit(TimedEvent::new(t_s, event)));
        out
    }

    fn join(&mut self, id: String, t_s: f64) -> Vec<ServerMessage> {
        match &self.participant {
            Some(p) if *p != id => {
                return vec![ServerMessage::error(format!("session belongs to participant {p:?}"))];
            }
            Some(_) => return vec![self.state(t_s)],
            None => self.participant = Some(id),
        }
        let actions = self.driver.submit(TimedEvent::new(t_s, SessionEvent::PhaseStart));
        let mut out = vec![self.state(t_s)];
        match actions {
            Ok(a) => out.extend(to_messages(&a, &self.cue_text)),
            Err(e) => out.push(ServerMessage::error(e.to_string())),
        }
        out
    }

    fn submit(&mut self, ev: TimedEvent) -> Vec<ServerMessage> {
        let t = ev.t_s;
        match self.driver.submit(ev) {
            Ok(actions) => self.with_state(&actions, t),
            Err(e) => vec![ServerMessage::error(e.to_string())],
        }
    }

    fn with_state(&self, actions: &[TimedAction], t: f64) -> Vec<ServerMessage> {
        let mut out = to_messages(actions, &self.cue_text);
        let phase_change = actions.iter().any(|a| {
            matches!(
                a.action,
                SessionAction::PhaseBegin { .. } | SessionAction::PhaseComplete { .. } | SessionAction::SessionDone { .. }
            )
        });
        if phase_change {
            out.push(self.state(t));
        }
        out
    }

    /// Due time of the next robot-side event.
    pub fn next_due(&self) -> Option<f64> {
        self.driver.next_timer()
    }

    /// Fire every robot-side event due at or before `t_s`, in order.
    pub fn poll(&mut self, t_s: f64) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        while let Some(due) = self.driver.next_timer().filter(|&d| d <= t_s) {
            match self.driver.fire_timer() {
                Some(Ok(actions)) => out.extend(self.with_state(&actions, due)),
                Some(Err(e)) => out.push(ServerMessage::error(e.to_string())),
                None => break,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{plan_session, ParticipantPrefs, SessionKind};

    fn session(kind: SessionKind) -> ServiceSession {
        let bank = SongBank::builtin();
        let cfg = SessionConfig::default();
        let plan = plan_session(kind, &ParticipantPrefs::default(), &bank, &cfg).unwrap();
        ServiceSession::new(plan, cfg, bank, 1, RobotTiming::default()).unwrap()
    }

    #[test]
    fn message_schema() {
        let m = ServerMessage::Cue { text: "go".into(), window_s: 7.0, free_play: false };
        assert_eq!(m.to_json(), r#"{"type":"cue","body":{"text":"go","window_s":7.0,"free_play":false}}"#);
        assert_eq!(
            ClientMessage::parse(r#"{"type":"strike","body":{"note":"b","t_s":1.5}}"#).unwrap(),
            ClientMessage::Strike { note: "b".into(), t_s: Some(1.5) }
        );
        assert_eq!(ClientMessage::parse(r#"{"type":"stop"}"#).unwrap(), ClientMessage::Stop);
        assert!(matches!(ClientMessage::parse(r#"{"type":"dance","body":{}}"#), Err(ProtocolError::UnknownType(_))));
        assert!(matches!(ClientMessage::parse("{oops"), Err(ProtocolError::Malformed(_))));
        for m in [
            ClientMessage::Join { participant_id: "p1".into() },
            ClientMessage::ModeSelect { mode: 2 },
            ClientMessage::Rating { value: 5 },
            ClientMessage::EmotionAnswer { text: "calm".into() },
        ] {
            assert_eq!(ClientMessage::parse(&m.to_json()).unwrap(), m);
        }
    }

    #[test]
    fn join_reports_warm_up_then_demonstrates() {
        let mut s = session(SessionKind::Intervention(1));
        assert_eq!(s.on_frame(r#"{"type":"strike","body":{"note":"1"}}"#, 0.0)[0].kind(), "error");
        let out = s.on_frame(r#"{"type":"join","body":{"participant_id":"p7"}}"#, 0.0);
        let ServerMessage::State(st) = &out[0] else { panic!("{out:?}") };
        assert_eq!(st.phase, Some(Phase::WarmUp));
        assert_eq!(out[1].kind(), "demonstrate");
        assert_eq!(s.on_frame(r#"{"type":"join","body":{"participant_id":"other"}}"#, 0.1)[0].kind(), "error");
    }

    #[test]
    fn strike_in_window_gets_feedback() {
        let mut s = session(SessionKind::Intervention(1));
        let out = s.on_frame(r#"{"type":"join","body":{"participant_id":"p"}}"#, 0.0);
        let ServerMessage::Demonstrate { notes, .. } = &out[1] else { panic!() };
        let note = notes.clone();
        let due = s.next_due().unwrap();
        assert!(s.poll(due).is_empty()); // verbal cue only
        let due = s.next_due().unwrap();
        let cue = s.poll(due);
        let ServerMessage::Cue { window_s, .. } = cue[0] else { panic!("{cue:?}") };
        let strike = format!(r#"{{"type":"strike","body":{{"note":"{note}"}}}}"#);
        assert!(s.on_frame(&strike, due + 1.0).is_empty());
        let fb = s.poll(due + window_s);
        assert!(matches!(fb[0], ServerMessage::Feedback { likelihood: Some(l), .. } if l == 1.0), "{fb:?}");
        // Garbage is answered, not fatal.
        assert_eq!(s.on_frame("not json", due + window_s)[0].kind(), "error");
        assert_eq!(s.on_frame(r#"{"type":"strike","body":{"note":"z"}}"#, due + window_s)[0].kind(), "error");
    }
}
