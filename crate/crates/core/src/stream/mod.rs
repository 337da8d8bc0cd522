//! Event data model, ingestion, sliding windows and trace fragments.

mod csv_input;
mod fragments;
mod window;
mod xes;

pub use csv_input::{parse_event_record, parse_timestamp, read_csv, write_csv, Column, CsvSchema};
pub use fragments::{assemble_fragments, CaseLedger, CaseState, CompletionPolicy, FragmentKind, TraceFragment};
pub use window::{
    collect_window, collect_window_with_slack, partition_into_windows, tile_windows, StreamWindow, WindowBounds, WEEK,
};
pub use xes::read_xes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOUR: i64 = 3_600;
pub const DAY: i64 = 86_400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("line {line}: missing column `{column}`")]
    MissingColumn { line: usize, column: String },
    #[error("line {line}: cannot parse timestamp `{value}`")]
    UnparseableTimestamp { line: usize, value: String },
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("event at {timestamp} arrives after {watermark} (slack {slack}s)")]
    OutOfOrderEvent { timestamp: i64, watermark: i64, slack: i64 },
    #[error("window size must be positive, got {0}")]
    InvalidWindow(i64),
    #[error("span covers {weeks} week(s), fewer than the {k} windows requested")]
    SpanTooShort { weeks: i64, k: usize },
    #[error("invalid log span [{min}, {max}]")]
    InvalidSpan { min: i64, max: i64 },
    #[error("completion policy needs end activities or a timeout")]
    EmptyPolicy,
    #[error("xes: {0}")]
    Xes(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Value of an event attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Numeric(f64),
    Categorical(String),
}

impl AttrValue {
    /// Numbers when the text parses as a finite float, categories otherwise.
    pub fn infer(raw: &str) -> Self {
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => AttrValue::Numeric(v),
            _ => AttrValue::Categorical(raw.to_string()),
        }
    }
}

impl std::fmt::Display for AttrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttrValue::Numeric(v) => write!(f, "{v}"),
            AttrValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// One observed activity execution.
///
/// `timestamp` is the completion time in epoch seconds. `start` is only
/// known for logs that record start and complete lifecycle pairs (and for
/// simulated logs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub resource: String,
    pub timestamp: i64,
    #[serde(default)]
    pub start: Option<i64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, resource: impl Into<String>, timestamp: i64) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            resource: resource.into(),
            timestamp,
            start: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_start(mut self, start: i64) -> Self {
        self.start = Some(start);
        self
    }

    /// Start when recorded, completion otherwise.
    pub fn start_or_complete(&self) -> i64 {
        self.start.unwrap_or(self.timestamp)
    }
}

/// All events of one case, ordered by completion time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn activities(&self) -> Vec<String> {
        self.events.iter().map(|e| e.activity.clone()).collect()
    }

    /// First start (or completion) timestamp of the case.
    pub fn case_start(&self) -> Option<i64> {
        self.events.iter().map(Event::start_or_complete).min()
    }

    pub fn case_end(&self) -> Option<i64> {
        self.events.iter().map(|e| e.timestamp).max()
    }
}

/// Groups events by case. Cases are ordered by their start, then id; events
/// within a case keep timestamp order (stable on ingestion order).
pub fn group_traces(events: &[Event]) -> Vec<Trace> {
    let mut by_case: BTreeMap<&str, Vec<Event>> = BTreeMap::new();
    for e in events {
        by_case.entry(e.case_id.as_str()).or_default().push(e.clone());
    }
    let mut traces: Vec<Trace> = by_case
        .into_iter()
        .map(|(case, mut evs)| {
            evs.sort_by_key(|e| (e.timestamp, e.start_or_complete()));
            Trace { case_id: case.to_string(), events: evs }
        })
        .collect();
    traces.sort_by(|a, b| a.case_start().cmp(&b.case_start()).then_with(|| a.case_id.cmp(&b.case_id)));
    traces
}

/// Hour of the week with Monday 00:00 as slot 0.
pub fn hour_of_week(ts: i64) -> usize {
    // 1970-01-01 was a Thursday, three days after Monday.
    let days = ts.div_euclid(DAY);
    let dow = (days + 3).rem_euclid(7);
    let hour = ts.rem_euclid(DAY) / HOUR;
    (dow * 24 + hour) as usize
}

/// Day of the week with Monday as 0.
pub fn day_of_week(ts: i64) -> usize {
    (ts.div_euclid(DAY) + 3).rem_euclid(7) as usize
}
