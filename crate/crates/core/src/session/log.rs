use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    Driver, RobotTiming, SessionAction, SessionConfig, SessionError, SessionEvent, SessionPlan, SongBank,
    TimedAction, TimedEvent,
};

/// Stamped into every log header: grades come from timing rules, not annotators.
pub const GRADING_NOTE: &str = "automated-timing-rules (substitutes for human annotation of turn-taking)";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Meta,
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub t_s: f64,
    pub dir: Direction,
    pub event: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub grading: String,
    pub seed: u64,
    pub plan: SessionPlan,
    pub config: SessionConfig,
    pub timing: RobotTiming,
    pub bank: SongBank,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

fn split_tagged(v: Value, tag: &str) -> (String, Value) {
    match v {
        Value::Object(mut m) => {
            let name = m.remove(tag).and_then(|n| n.as_str().map(str::to_owned)).unwrap_or_default();
            (name, m.remove("payload").unwrap_or(Value::Null))
        }
        _ => (String::new(), Value::Null),
    }
}

impl SessionLog {
    pub fn header(&self) -> Result<LogHeader, SessionError> {
        let first = self.records.first().ok_or_else(|| SessionError::Log("empty log".into()))?;
        if first.event != "header" {
            return Err(SessionError::Log("first record is not a header".into()));
        }
        serde_json::from_value(first.payload.clone()).map_err(|e| SessionError::Log(e.to_string()))
    }

    fn push(&mut self, t_s: f64, dir: Direction, event: String, payload: Value) {
        let seq = self.records.len() as u64;
        self.records.push(LogRecord { seq, t_s, dir, event, payload });
    }

    pub(crate) fn push_header(&mut self, header: &LogHeader) {
        let payload = serde_json::to_value(header).expect("header serializes");
        self.push(0.0, Direction::Meta, "header".into(), payload);
    }

    pub(crate) fn push_event(&mut self, ev: &TimedEvent) {
        let (name, payload) = split_tagged(serde_json::to_value(&ev.event).expect("event serializes"), "event");
        self.push(ev.t_s, Direction::In, name, payload);
    }

    pub(crate) fn push_action(&mut self, a: &TimedAction) {
        let (name, payload) = split_tagged(serde_json::to_value(&a.action).expect("action serializes"), "action");
        self.push(a.t_s, Direction::Out, name, payload);
    }

    pub(crate) fn push_error(&mut self, t_s: f64, err: &SessionError) {
        self.push(t_s, Direction::Out, "error".into(), json!({ "message": err.to_string() }));
    }

    /// Input events in order, rebuilt from their records.
    pub fn inputs(&self) -> Result<Vec<TimedEvent>, SessionError> {
        self.records
            .iter()
            .filter(|r| r.dir == Direction::In)
            .map(|r| {
                let mut obj = json!({ "event": r.event });
                if !r.payload.is_null() {
                    obj["payload"] = r.payload.clone();
                }
                let event: SessionEvent = serde_json::from_value(obj)
                    .map_err(|e| SessionError::Log(format!("record {}: {e}", r.seq)))?;
                Ok(TimedEvent::new(r.t_s, event))
            })
            .collect()
    }

    pub fn outputs(&self) -> Result<Vec<TimedAction>, SessionError> {
        self.records
            .iter()
            .filter(|r| r.dir == Direction::Out && r.event != "error")
            .map(|r| {
                let mut obj = json!({ "action": r.event });
                if !r.payload.is_null() {
                    obj["payload"] = r.payload.clone();
                }
                let action: SessionAction = serde_json::from_value(obj)
                    .map_err(|e| SessionError::Log(format!("record {}: {e}", r.seq)))?;
                Ok(TimedAction { t_s: r.t_s, action })
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, SessionError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SessionError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord =
                serde_json::from_str(&line).map_err(|e| SessionError::Log(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub inputs: usize,
    pub records: usize,
    /// First record index where the replay diverged, if any.
    pub first_mismatch: Option<usize>,
    pub replayed: SessionLog,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Feed a log's inputs through a fresh engine and compare the resulting log.
pub fn replay(log: &SessionLog) -> Result<ReplayReport, SessionError> {
    let h = log.header()?;
    let mut driver = Driver::new(h.plan, h.config, h.bank, h.seed, h.timing)?;
    let inputs = log.inputs()?;
    for ev in &inputs {
        // Rejected events are logged by the driver, exactly as in the original run.
        let _ = driver.submit(ev.clone());
    }
    let replayed = driver.into_log();
    let a = log.to_jsonl();
    let b = replayed.to_jsonl();
    let first_mismatch = if a == b {
        None
    } else {
        Some(
            log.records
                .iter()
                .zip(&replayed.records)
                .position(|(x, y)| x != y)
                .unwrap_or(log.records.len().min(replayed.records.len())),
        )
    };
    Ok(ReplayReport { inputs: inputs.len(), records: replayed.records.len(), first_mismatch, replayed })
}
