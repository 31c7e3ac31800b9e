//! Append-only audit store.
//!
//! Every perception, action and message of every agent becomes one
//! [`AuditRecord`], stored as one JSON object per line with the fields
//! `seq, ts, agent, action, distribution_id, case_number, location, payload`
//! in that order. An in-memory index (distribution id to sequence numbers)
//! is rebuilt when an existing log is opened.
//!
//! Appends never rewrite earlier bytes. A failed write halts the log: every
//! later append fails too, so callers stop taking new work instead of
//! continuing without a trail.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::distributor::DistributionOutcome;

pub mod actions {
    pub const START_DISTRIBUTION: &str = "start-distribution";
    pub const START_BEHAVIOR: &str = "start-behavior";
    pub const HANDLE_MESSAGE: &str = "handle-message";
    pub const SEND_MESSAGE: &str = "send-message";
    pub const DELIVERY_FAILED: &str = "delivery-failed";
    pub const REGISTER_AGENT: &str = "register-agent";
    pub const REGISTER_IMPEDIMENT: &str = "register-impediment";
    pub const LIFECYCLE_CHANGE: &str = "lifecycle-change";
    pub const INGEST_LAWSUIT: &str = "ingest-lawsuit";
    pub const FIRE_RULE: &str = "fire-rule";
    pub const RECORD_OUTCOME: &str = "record-outcome";
    pub const DISTRIBUTION_FAILED: &str = "distribution-failed";
    pub const QUERY_TIMEOUT: &str = "query-timeout";

    /// Actions that record the consumption of a delivered message.
    pub const CONSUMPTION: [&str; 2] = [START_BEHAVIOR, HANDLE_MESSAGE];
}

pub const PLATFORM_AGENT: &str = "PLATFORM";
pub const DEFAULT_LOCATION: &str = "local";

/// ISO-8601 UTC timestamps with millisecond precision.
pub mod ts_millis {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(t.timestamp_millis())
        .single()
        .unwrap_or(t)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        truncate_ms(Utc::now())
    }
}

/// Deterministic clock advancing a fixed number of milliseconds per reading.
#[derive(Debug)]
pub struct SteppingClock {
    next_ms: AtomicI64,
    step_ms: i64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            next_ms: AtomicI64::new(start.timestamp_millis()),
            step_ms,
        }
    }

    /// A clock that never moves.
    pub fn fixed(at: DateTime<Utc>) -> Self {
        Self::new(at, 0)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = self.next_ms.fetch_add(self.step_ms, Ordering::Relaxed);
        Utc.timestamp_millis_opt(ms)
            .single()
            .expect("clock in range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    #[serde(with = "ts_millis")]
    pub ts: DateTime<Utc>,
    pub agent: String,
    pub action: String,
    pub distribution_id: Option<String>,
    pub case_number: Option<String>,
    pub location: String,
    pub payload: Json,
}

/// A record before the appender assigns its sequence number and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub agent: String,
    pub action: &'static str,
    pub distribution_id: Option<String>,
    pub case_number: Option<String>,
    pub payload: Json,
}

impl Entry {
    pub fn new(agent: impl Into<String>, action: &'static str, payload: Json) -> Self {
        Self {
            agent: agent.into(),
            action,
            distribution_id: None,
            case_number: None,
            payload,
        }
    }

    pub fn in_distribution(mut self, id: impl Into<String>) -> Self {
        self.distribution_id = Some(id.into());
        self
    }

    pub fn for_case(mut self, case: impl ToString) -> Self {
        self.case_number = Some(case.to_string());
        self
    }

    pub fn with_conversation(mut self, id: Option<&str>) -> Self {
        self.distribution_id = id.map(str::to_owned);
        self
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit storage failure: {0}")]
    StorageFailure(String),
    #[error("audit log halted after an earlier storage failure")]
    Halted,
    #[error("unknown distribution {0}")]
    UnknownDistribution(String),
    #[error("audit log line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

enum Backend {
    Memory(Vec<String>),
    File {
        path: PathBuf,
        writer: File,
        reader: File,
        offsets: Vec<u64>,
        end: u64,
    },
    Writer {
        sink: Box<dyn Write + Send>,
        lines: Vec<String>,
    },
}

/// Chain links between a distribution and the redistribution that replaced it.
#[derive(Debug, Default, Clone)]
struct Links {
    predecessor: Option<String>,
    successor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceView {
    pub distribution_id: String,
    pub records: Vec<AuditRecord>,
    pub outcome: Option<DistributionOutcome>,
    pub predecessor: Option<String>,
    pub successor: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RuleCount {
    pub rule_number: u8,
    pub count: u64,
    pub frequency: f64,
}

pub struct AuditLog {
    backend: Backend,
    clock: Arc<dyn Clock>,
    location: String,
    next_seq: u64,
    halted: bool,
    by_distribution: HashMap<String, Vec<u64>>,
    /// Distribution ids that own a record-outcome, in append order.
    outcomes: Vec<(String, u64)>,
    outcome_seq: HashMap<String, u64>,
    links: HashMap<String, Links>,
    rule_counts: BTreeMap<u8, u64>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog")
            .field("records", &self.len())
            .field("halted", &self.halted)
            .finish()
    }
}

fn storage(e: impl std::fmt::Display) -> AuditError {
    AuditError::StorageFailure(e.to_string())
}

impl AuditLog {
    fn empty(backend: Backend, clock: Arc<dyn Clock>) -> Self {
        Self {
            backend,
            clock,
            location: DEFAULT_LOCATION.to_owned(),
            next_seq: 1,
            halted: false,
            by_distribution: HashMap::new(),
            outcomes: Vec::new(),
            outcome_seq: HashMap::new(),
            links: HashMap::new(),
            rule_counts: BTreeMap::new(),
        }
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::empty(Backend::Memory(Vec::new()), clock)
    }

    /// Mirrors every line into `sink` and keeps the lines in memory.
    pub fn with_writer(sink: Box<dyn Write + Send>, clock: Arc<dyn Clock>) -> Self {
        Self::empty(
            Backend::Writer {
                sink,
                lines: Vec::new(),
            },
            clock,
        )
    }

    /// Opens (or creates) a log file, indexing any records it already holds.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, AuditError> {
        let path = path.as_ref().to_path_buf();
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        let reader = File::open(&path).map_err(storage)?;
        let mut log = Self::empty(
            Backend::File {
                path: path.clone(),
                writer,
                reader,
                offsets: Vec::new(),
                end: 0,
            },
            clock,
        );
        let mut buf = BufReader::new(File::open(&path).map_err(storage)?);
        let mut line = String::new();
        let mut offset = 0u64;
        let mut lineno = 0;
        loop {
            line.clear();
            let n = buf.read_line(&mut line).map_err(storage)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            if !line.ends_with('\n') {
                return Err(AuditError::MalformedRecord {
                    line: lineno,
                    message: "truncated final line".into(),
                });
            }
            let record: AuditRecord =
                serde_json::from_str(&line).map_err(|e| AuditError::MalformedRecord {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if record.seq != log.next_seq {
                return Err(AuditError::MalformedRecord {
                    line: lineno,
                    message: format!("expected seq {}, found {}", log.next_seq, record.seq),
                });
            }
            log.index(&record);
            if let Backend::File { offsets, .. } = &mut log.backend {
                offsets.push(offset);
            }
            offset += n as u64;
            log.next_seq += 1;
        }
        if let Backend::File { end, .. } = &mut log.backend {
            *end = offset;
        }
        Ok(log)
    }

    pub fn set_location(&mut self, location: impl Into<String>) {
        self.location = location.into();
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::File { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn len(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn append(&mut self, entry: Entry) -> Result<u64, AuditError> {
        let ts = self.clock.now();
        self.append_at(entry, ts)
    }

    /// Appends with a caller-chosen timestamp (used when the payload embeds
    /// the same instant).
    pub fn append_at(&mut self, entry: Entry, ts: DateTime<Utc>) -> Result<u64, AuditError> {
        if self.halted {
            return Err(AuditError::Halted);
        }
        let record = AuditRecord {
            seq: self.next_seq,
            ts,
            agent: entry.agent,
            action: entry.action.to_owned(),
            distribution_id: entry.distribution_id,
            case_number: entry.case_number,
            location: self.location.clone(),
            payload: entry.payload,
        };
        let mut line = serde_json::to_string(&record).map_err(storage)?;
        line.push('\n');
        let written = match &mut self.backend {
            Backend::Memory(lines) => {
                lines.push(line);
                Ok(())
            }
            Backend::Writer { sink, lines } => {
                let r = sink.write_all(line.as_bytes()).and_then(|_| sink.flush());
                if r.is_ok() {
                    lines.push(line);
                }
                r
            }
            Backend::File {
                writer,
                offsets,
                end,
                ..
            } => {
                let r = writer
                    .write_all(line.as_bytes())
                    .and_then(|_| writer.flush());
                if r.is_ok() {
                    offsets.push(*end);
                    *end += line.len() as u64;
                }
                r
            }
        };
        if let Err(e) = written {
            self.halted = true;
            return Err(storage(e));
        }
        self.index(&record);
        self.next_seq += 1;
        Ok(record.seq)
    }

    fn index(&mut self, record: &AuditRecord) {
        let Some(id) = &record.distribution_id else {
            return;
        };
        self.by_distribution
            .entry(id.clone())
            .or_default()
            .push(record.seq);
        if record.action == actions::RECORD_OUTCOME {
            if let Some(rule) = record.payload.get("rule_number").and_then(Json::as_u64) {
                *self.rule_counts.entry(rule as u8).or_default() += 1;
            }
            self.outcomes.push((id.clone(), record.seq));
            self.outcome_seq.insert(id.clone(), record.seq);
            if let Some(prev) = record
                .payload
                .pointer("/justification/supersedes")
                .and_then(Json::as_str)
            {
                self.links.entry(prev.to_owned()).or_default().successor = Some(id.clone());
                self.links.entry(id.clone()).or_default().predecessor = Some(prev.to_owned());
            }
        }
    }

    fn line(&self, seq: u64) -> Result<String, AuditError> {
        if seq == 0 || seq >= self.next_seq {
            return Err(storage(format!("no record {seq}")));
        }
        let i = (seq - 1) as usize;
        match &self.backend {
            Backend::Memory(lines) | Backend::Writer { lines, .. } => Ok(lines[i].clone()),
            Backend::File {
                reader,
                offsets,
                end,
                ..
            } => {
                let start = offsets[i];
                let stop = offsets.get(i + 1).copied().unwrap_or(*end);
                let mut buf = vec![0u8; (stop - start) as usize];
                let mut r = reader;
                r.seek(SeekFrom::Start(start)).map_err(storage)?;
                r.read_exact(&mut buf).map_err(storage)?;
                String::from_utf8(buf).map_err(storage)
            }
        }
    }

    pub fn record(&self, seq: u64) -> Result<AuditRecord, AuditError> {
        let line = self.line(seq)?;
        serde_json::from_str(&line).map_err(|e| AuditError::MalformedRecord {
            line: seq as usize,
            message: e.to_string(),
        })
    }

    /// Raw JSON line of a record, without the trailing newline.
    pub fn raw(&self, seq: u64) -> Result<String, AuditError> {
        let mut l = self.line(seq)?;
        l.pop();
        Ok(l)
    }

    pub fn records(&self) -> impl Iterator<Item = Result<AuditRecord, AuditError>> + '_ {
        (1..self.next_seq).map(|s| self.record(s))
    }

    /// Distribution ids that reached an outcome, in the order they did.
    pub fn distribution_ids(&self) -> impl Iterator<Item = &str> {
        self.outcomes.iter().map(|(id, _)| id.as_str())
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn known_distribution(&self, id: &str) -> bool {
        self.by_distribution.contains_key(id)
    }

    pub fn outcome(&self, id: &str) -> Result<Option<DistributionOutcome>, AuditError> {
        match self.outcome_seq.get(id) {
            None if self.known_distribution(id) => Ok(None),
            None => Err(AuditError::UnknownDistribution(id.to_owned())),
            Some(&seq) => {
                let r = self.record(seq)?;
                Ok(serde_json::from_value(r.payload).ok())
            }
        }
    }

    pub fn trace_len(&self, id: &str) -> Result<usize, AuditError> {
        self.by_distribution
            .get(id)
            .map(Vec::len)
            .ok_or_else(|| AuditError::UnknownDistribution(id.to_owned()))
    }

    /// All records of one distribution instance in sequence order, with its
    /// outcome and redistribution links.
    pub fn trace(&self, id: &str) -> Result<TraceView, AuditError> {
        let seqs = self
            .by_distribution
            .get(id)
            .ok_or_else(|| AuditError::UnknownDistribution(id.to_owned()))?;
        let records = seqs
            .iter()
            .map(|&s| self.record(s))
            .collect::<Result<Vec<_>, _>>()?;
        let outcome = records
            .iter()
            .rev()
            .find(|r| r.action == actions::RECORD_OUTCOME)
            .and_then(|r| serde_json::from_value(r.payload.clone()).ok());
        let links = self.links.get(id).cloned().unwrap_or_default();
        Ok(TraceView {
            distribution_id: id.to_owned(),
            records,
            outcome,
            predecessor: links.predecessor,
            successor: links.successor,
        })
    }

    /// Re-executes the recorded directive over the recorded candidate lists
    /// and picks, and checks the result against the recorded outcome and
    /// the rest of the trace.
    pub fn verify_replay(&self, id: &str) -> Result<bool, AuditError> {
        let trace = self.trace(id)?;
        verify_trace(&trace)
    }

    pub fn rule_stats(&self) -> Vec<RuleCount> {
        let total: u64 = self.rule_counts.values().sum();
        (1..=4)
            .map(|rule_number| {
                let count = self.rule_counts.get(&rule_number).copied().unwrap_or(0);
                RuleCount {
                    rule_number,
                    count,
                    frequency: if total == 0 {
                        0.0
                    } else {
                        count as f64 / total as f64
                    },
                }
            })
            .collect()
    }
}

/// SHA-256 of the compact serialization of an outcome payload, in hex.
pub fn outcome_digest(payload: &Json) -> String {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(payload).expect("json value serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Replay check over an already loaded trace.
pub fn verify_trace(trace: &TraceView) -> Result<bool, AuditError> {
    let id = trace.distribution_id.as_str();
    let Some(record) = trace
        .records
        .iter()
        .rev()
        .find(|r| r.action == actions::RECORD_OUTCOME)
    else {
        return Ok(false);
    };
    let Ok(outcome) = serde_json::from_value::<DistributionOutcome>(record.payload.clone()) else {
        return Ok(false);
    };
    let opened = trace
        .records
        .iter()
        .find(|r| r.action == actions::START_DISTRIBUTION);
    let seeded = opened
        .and_then(|r| r.payload.get("draw_seed"))
        .and_then(Json::as_u64);
    if seeded != Some(outcome.justification.draw_seed) {
        return Ok(false);
    }
    let consistent_header = outcome.distribution_id == id
        && record.case_number.as_deref() == Some(outcome.case_number.to_string().as_str())
        && outcome.timestamp == record.ts
        && outcome.rule_number == outcome.directive.rule_number();
    if !consistent_header {
        return Ok(false);
    }
    let fired = trace
        .records
        .iter()
        .find(|r| r.action == actions::FIRE_RULE);
    let fired_matches = fired.is_some_and(|r| {
        r.payload.get("rule").and_then(Json::as_str) == Some(outcome.fired_rule.as_str())
            && r.payload.get("directive").and_then(Json::as_str) == Some(outcome.directive.name())
    });
    if !fired_matches {
        return Ok(false);
    }
    // a justification that cannot be re-executed fails replay
    let Ok((body, magistrate)) = outcome.justification.replay(outcome.directive) else {
        return Ok(false);
    };
    if body != outcome.body || magistrate != outcome.magistrate {
        return Ok(false);
    }
    // the protocol agent was told the same result, or the attempt is on record
    let informed = trace.records.iter().find(|r| {
        (r.action == actions::SEND_MESSAGE || r.action == actions::DELIVERY_FAILED)
            && r.payload.get("content_type").and_then(Json::as_str) == Some("inform-distribution")
    });
    Ok(informed.is_some_and(|r| {
        let p = &r.payload["payload"];
        p.get("body").and_then(Json::as_str) == Some(body.as_str())
            && p.get("magistrate").and_then(Json::as_str) == Some(magistrate.as_str())
            && p.get("outcome_digest").and_then(Json::as_str)
                == Some(outcome_digest(&record.payload).as_str())
    }))
}
