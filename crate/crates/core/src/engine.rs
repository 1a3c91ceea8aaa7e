//! The append-only, hash-chained event log and the only mutation path into
//! [`EngineState`].

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{chain_hash, from_canonical_bytes, to_canonical_string, Digest};
use crate::error::{EngineError, EngineResult};
use crate::event::Event;
use crate::jurisdiction::{residency_filter, sensitive_fields};
use crate::state::EngineState;
use crate::types::Tick;

pub const LOG_FORMAT: &str = "hc-audit-log";
pub const LOG_VERSION: u32 = 1;
pub const HASH_ALGORITHM: &str = "sha256";

/// One audit-log entry. `hash = SHA-256(prev_hash ‖ payload)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub index: u64,
    pub tick: Tick,
    pub prev_hash: Digest,
    /// Canonical JSON of `{"event": .., "tick": ..}`.
    pub payload: String,
    pub hash: Digest,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    event: Event,
    tick: Tick,
}

impl EventRecord {
    pub fn event(&self) -> serde_json::Result<Event> {
        Ok(self.decode()?.event)
    }

    fn decode(&self) -> serde_json::Result<Payload> {
        from_canonical_bytes(self.payload.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogVerdict {
    Ok,
    BrokenAt(u64),
}

impl LogVerdict {
    pub fn is_ok(&self) -> bool {
        *self == LogVerdict::Ok
    }
}

impl fmt::Display for LogVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogVerdict::Ok => f.write_str("ok"),
            LogVerdict::BrokenAt(i) => write!(f, "broken at record {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("integrity error: log broken at record {0}")]
    Integrity(u64),
    #[error("record {index} no longer validates: {reason}")]
    ValidationFailed { index: u64, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct Engine {
    state: EngineState,
    log: Vec<EventRecord>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn into_parts(self) -> (EngineState, Vec<EventRecord>) {
        (self.state, self.log)
    }

    /// Hash of the last record, or zero for an empty log.
    pub fn head(&self) -> Digest {
        self.log.last().map_or(Digest::ZERO, |r| r.hash)
    }

    /// Validate and apply `event`, then log it. On error nothing changes.
    pub fn append(&mut self, event: Event) -> EngineResult<&EventRecord> {
        let event = self.stored_form(event)?;
        let mut next = self.state.clone();
        next.apply_event(&event)?;
        self.state = next;
        Ok(self.push(event))
    }

    /// Log an event that failed validation. State is untouched.
    pub fn record_rejection(&mut self, event: Event, reason: impl Into<String>) -> &EventRecord {
        let event = self.stored_form(event.clone()).unwrap_or(event);
        let rejected = Event::Rejected {
            event: Box::new(event),
            reason: reason.into(),
        };
        self.push(rejected)
    }

    /// Append, or record a rejection and return the error.
    pub fn submit(&mut self, event: Event) -> EngineResult<()> {
        match self.append(event.clone()) {
            Ok(_) => Ok(()),
            Err(e) => {
                self.record_rejection(event, e.to_string());
                Err(e)
            }
        }
    }

    /// The event as it will be applied and logged, with sensitive values hashed.
    fn stored_form(&self, event: Event) -> EngineResult<Event> {
        let sensitive = sensitive_fields(&self.state.jurisdictions);
        if sensitive.is_empty() {
            return Ok(event);
        }
        let mut v: Value = serde_json::to_value(&event).map_err(|e| EngineError::invalid(e.to_string()))?;
        residency_filter(&mut v, &sensitive);
        serde_json::from_value(v).map_err(|e| EngineError::invalid(format!("event invalid after residency filter: {e}")))
    }

    fn push(&mut self, event: Event) -> &EventRecord {
        let tick = self.state.clock;
        let payload = to_canonical_string(&Payload { event, tick });
        let prev_hash = self.head();
        let hash = chain_hash(&prev_hash, payload.as_bytes());
        self.log.push(EventRecord {
            index: self.log.len() as u64,
            tick,
            prev_hash,
            payload,
            hash,
        });
        self.log.last().unwrap()
    }
}

/// Recompute the chain. Reports the first record that fails any check.
pub fn verify_log(records: &[EventRecord]) -> LogVerdict {
    let mut prev = Digest::ZERO;
    let mut last_tick = 0;
    for (i, r) in records.iter().enumerate() {
        let i = i as u64;
        let ok = r.index == i
            && r.prev_hash == prev
            && chain_hash(&r.prev_hash, r.payload.as_bytes()) == r.hash
            && r.tick >= last_tick
            && r.decode().is_ok_and(|p| p.tick == r.tick && to_canonical_string(&p) == r.payload);
        if !ok {
            return LogVerdict::BrokenAt(i);
        }
        prev = r.hash;
        last_tick = r.tick;
    }
    LogVerdict::Ok
}

/// Rebuild an engine from a verified log, checking each regenerated record
/// matches the original.
pub fn replay(records: &[EventRecord]) -> Result<Engine, ReplayError> {
    if let LogVerdict::BrokenAt(i) = verify_log(records) {
        return Err(ReplayError::Integrity(i));
    }
    let mut engine = Engine::new();
    for r in records {
        let fail = |reason: String| ReplayError::ValidationFailed { index: r.index, reason };
        let event = r.event().map_err(|e| fail(e.to_string()))?;
        match event {
            Event::Rejected { event, reason } => {
                let mut probe = engine.state.clone();
                if probe.apply_event(&event).is_ok() {
                    return Err(fail("rejected event now applies".into()));
                }
                engine.record_rejection(*event, reason);
            }
            event => {
                engine.append(event).map_err(|e| fail(e.to_string()))?;
            }
        }
        if engine.head() != r.hash {
            return Err(fail("regenerated record differs from the original".into()));
        }
    }
    Ok(engine)
}

#[derive(Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
struct LogHeader {
    format: String,
    version: u32,
    hash: String,
}

fn header() -> LogHeader {
    LogHeader {
        format: LOG_FORMAT.into(),
        version: LOG_VERSION,
        hash: HASH_ALGORITHM.into(),
    }
}

/// Header line, then one canonical record per line.
pub fn write_log(records: &[EventRecord]) -> String {
    let mut out = to_canonical_string(&header());
    out.push('\n');
    for r in records {
        out.push_str(&to_canonical_string(r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogFileError {
    #[error("bad log header")]
    Header,
    #[error("unparseable record at index {0}")]
    Record(u64),
}

/// Parse a log file. Every line must already be in canonical form.
pub fn read_log(text: &str) -> Result<Vec<EventRecord>, LogFileError> {
    let mut lines = text.split('\n');
    let head = lines.next().ok_or(LogFileError::Header)?;
    match serde_json::from_str::<LogHeader>(head) {
        Ok(h) if h == header() && to_canonical_string(&h) == head => {}
        _ => return Err(LogFileError::Header),
    }
    let body: Vec<&str> = lines.collect();
    let body = match body.split_last() {
        Some((&"", rest)) => rest,
        _ => &body[..],
    };
    body.iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str::<EventRecord>(line)
                .ok()
                .filter(|r| to_canonical_string(r) == *line)
                .ok_or(LogFileError::Record(i as u64))
        })
        .collect()
}

/// Verdict for a log file's raw text. A bad header counts as record 0.
pub fn verify_log_text(text: &str) -> LogVerdict {
    match read_log(text) {
        Ok(records) => verify_log(&records),
        Err(LogFileError::Header) => LogVerdict::BrokenAt(0),
        Err(LogFileError::Record(i)) => {
            // Earlier records may already be broken.
            let parsed: Vec<EventRecord> = text
                .split('\n')
                .skip(1)
                .take(i as usize)
                .filter_map(|l| serde_json::from_str(l).ok())
                .collect();
            match verify_log(&parsed) {
                LogVerdict::BrokenAt(j) => LogVerdict::BrokenAt(j.min(i)),
                LogVerdict::Ok => LogVerdict::BrokenAt(i),
            }
        }
    }
}
