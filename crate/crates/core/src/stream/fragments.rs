use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Event, StreamError, StreamWindow, DAY};

/// How a case's visible events relate to its full execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentKind {
    Complete,
    Prefix,
    Infix,
    Postfix,
}

impl FragmentKind {
    /// Whether the model may be entered mid-execution.
    pub fn open_start(self) -> bool {
        matches!(self, FragmentKind::Infix | FragmentKind::Postfix)
    }

    /// Whether the model may be left mid-execution.
    pub fn open_end(self) -> bool {
        matches!(self, FragmentKind::Infix | FragmentKind::Prefix)
    }
}

/// Domain knowledge deciding when a case is over: an end activity was
/// executed, or nothing happened for `timeout` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionPolicy {
    #[serde(default)]
    pub end_activities: BTreeSet<String>,
    #[serde(default)]
    pub timeout: Option<i64>,
}

impl Default for CompletionPolicy {
    fn default() -> Self {
        CompletionPolicy { end_activities: BTreeSet::new(), timeout: Some(30 * DAY) }
    }
}

impl CompletionPolicy {
    pub fn with_end_activities<I, S>(acts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CompletionPolicy { end_activities: acts.into_iter().map(Into::into).collect(), timeout: None }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.end_activities.is_empty() && self.timeout.is_none() {
            return Err(StreamError::EmptyPolicy);
        }
        Ok(())
    }

    /// Whether a case whose latest event is `last` is over at time `now`.
    pub fn is_complete(&self, last: &Event, now: i64) -> bool {
        self.end_activities.contains(&last.activity) || self.timeout.is_some_and(|to| now - last.timestamp >= to)
    }
}

/// Per-case carry-over between windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseState {
    pub first_ts: i64,
    pub last_ts: i64,
    pub events_seen: usize,
}

/// Cases observed in earlier windows and not yet complete.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLedger {
    pub cases: BTreeMap<String, CaseState>,
}

impl CaseLedger {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case: &str) -> Option<&CaseState> {
        self.cases.get(case)
    }
}

/// The part of one case visible in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFragment {
    pub case_id: String,
    pub events: Vec<Event>,
    pub kind: FragmentKind,
    /// Start of the case, from the ledger when it began earlier.
    pub case_start: i64,
    /// Completion time of the case's last event before this window.
    pub previous_ts: Option<i64>,
}

impl TraceFragment {
    pub fn activities(&self) -> Vec<String> {
        self.events.iter().map(|e| e.activity.clone()).collect()
    }

    /// Whether the case starts inside the window.
    pub fn starts_here(&self) -> bool {
        matches!(self.kind, FragmentKind::Complete | FragmentKind::Prefix)
    }
}

/// Splits a window into one fragment per case and classifies each against
/// the ledger of earlier windows. Returns the fragments (ordered by their
/// first event) and the ledger to use for the next window; `ledger` itself
/// is left untouched so the call can be repeated.
pub fn assemble_fragments(window: &StreamWindow, policy: &CompletionPolicy, ledger: &CaseLedger) -> (Vec<TraceFragment>, CaseLedger) {
    let mut order: Vec<&str> = Vec::new();
    let mut by_case: BTreeMap<&str, Vec<Event>> = BTreeMap::new();
    for e in &window.events {
        let entry = by_case.entry(e.case_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(e.case_id.as_str());
        }
        entry.push(e.clone());
    }

    let mut next = ledger.clone();
    let mut fragments = Vec::with_capacity(order.len());
    for case in order {
        let events = by_case.remove(case).unwrap_or_default();
        let last = events.last().expect("non-empty case group");
        let prior = ledger.get(case);
        let completed = policy.is_complete(last, window.end);
        let kind = match (prior.is_some(), completed) {
            (false, true) => FragmentKind::Complete,
            (false, false) => FragmentKind::Prefix,
            (true, true) => FragmentKind::Postfix,
            (true, false) => FragmentKind::Infix,
        };
        let first_here = events.iter().map(Event::start_or_complete).min().unwrap_or(last.timestamp);
        let case_start = prior.map_or(first_here, |p| p.first_ts);
        if completed {
            next.cases.remove(case);
        } else {
            next.cases.insert(
                case.to_string(),
                CaseState {
                    first_ts: case_start,
                    last_ts: last.timestamp,
                    events_seen: prior.map_or(0, |p| p.events_seen) + events.len(),
                },
            );
        }
        fragments.push(TraceFragment {
            case_id: case.to_string(),
            kind,
            case_start,
            previous_ts: prior.map(|p| p.last_ts),
            events,
        });
    }

    if let Some(to) = policy.timeout {
        next.cases.retain(|_, st| window.end - st.last_ts < to);
    }
    (fragments, next)
}
