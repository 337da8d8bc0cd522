use std::collections::{BTreeSet, HashMap};

use super::PipelineError;
use crate::stream::{
    assemble_fragments, group_traces, partition_into_windows, CaseLedger, CompletionPolicy, Event, FragmentKind, StreamWindow, Trace,
    TraceFragment, WindowBounds,
};

/// Latest timestamp and number of events handed out by a [`Protocol`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadCounter {
    pub max_ts: i64,
    pub events: usize,
}

impl Default for ReadCounter {
    fn default() -> Self {
        ReadCounter { max_ts: i64::MIN, events: 0 }
    }
}

impl ReadCounter {
    fn note(&mut self, events: &[Event]) {
        self.events += events.len();
        if let Some(last) = events.last() {
            self.max_ts = self.max_ts.max(last.timestamp);
        }
    }

    pub fn merge(&mut self, other: ReadCounter) {
        self.events += other.events;
        self.max_ts = self.max_ts.max(other.max_ts);
    }
}

/// A log split into `k` week-aligned windows. Every accessor reports what it
/// read to a [`ReadCounter`]. Window indices are 0-based.
#[derive(Debug, Clone)]
pub struct Protocol {
    events: Vec<Event>,
    bounds: Vec<WindowBounds>,
    policy: CompletionPolicy,
    /// Position of each case's first event in `events`.
    first_index: HashMap<String, usize>,
}

impl Protocol {
    pub fn new(mut events: Vec<Event>, k: usize, policy: CompletionPolicy) -> Result<Self, PipelineError> {
        policy.validate()?;
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.case_id.cmp(&b.case_id)));
        let (min, max) = match (events.first(), events.last()) {
            (Some(a), Some(b)) => (a.timestamp, b.timestamp),
            _ => return Err(PipelineError::Plan("input log is empty".into())),
        };
        let bounds = partition_into_windows(min, max, k)?;
        let mut first_index = HashMap::new();
        for (i, e) in events.iter().enumerate() {
            first_index.entry(e.case_id.clone()).or_insert(i);
        }
        Ok(Protocol { events, bounds, policy, first_index })
    }

    pub fn windows(&self) -> &[WindowBounds] {
        &self.bounds
    }

    pub fn k(&self) -> usize {
        self.bounds.len()
    }

    pub fn policy(&self) -> &CompletionPolicy {
        &self.policy
    }

    /// Index range of the events of windows `a..=b`.
    fn span(&self, a: usize, b: usize) -> (usize, usize) {
        let (wa, wb) = (&self.bounds[a], &self.bounds[b]);
        let lo = if wa.closed_start {
            self.events.partition_point(|e| e.timestamp < wa.start)
        } else {
            self.events.partition_point(|e| e.timestamp <= wa.start)
        };
        (lo, self.events.partition_point(|e| e.timestamp <= wb.end))
    }

    fn read(&self, a: usize, b: usize, reads: &mut ReadCounter) -> (usize, &[Event]) {
        let (lo, hi) = self.span(a, b);
        let evs = &self.events[lo..hi];
        reads.note(evs);
        (lo, evs)
    }

    /// Events of windows `a..=b` as one window.
    pub fn window_range(&self, a: usize, b: usize, reads: &mut ReadCounter) -> StreamWindow {
        let (_, evs) = self.read(a, b, reads);
        StreamWindow { start: self.bounds[a].start, end: self.bounds[b].end, events: evs.to_vec() }
    }

    pub fn window(&self, i: usize, reads: &mut ReadCounter) -> StreamWindow {
        self.window_range(i, i, reads)
    }

    /// Cases that start in window `a` or later and are complete by the end
    /// of window `b`, seen through windows `a..=b` only.
    pub fn complete_fragments(&self, a: usize, b: usize, reads: &mut ReadCounter) -> Vec<TraceFragment> {
        let (lo, evs) = self.read(a, b, reads);
        let window = StreamWindow { start: self.bounds[a].start, end: self.bounds[b].end, events: evs.to_vec() };
        let (frags, _) = assemble_fragments(&window, &self.policy, &CaseLedger::default());
        frags.into_iter().filter(|f| f.kind == FragmentKind::Complete && self.first_index[&f.case_id] >= lo).collect()
    }

    /// The evaluation log of window `j`: cases whose first event falls in
    /// `j` and that are complete by its end. Nothing after the window is
    /// read.
    pub fn test_log(&self, j: usize, reads: &mut ReadCounter) -> Vec<Trace> {
        let (lo, evs) = self.read(j, j, reads);
        let hi = lo + evs.len();
        let starting: BTreeSet<&str> =
            evs.iter().filter(|e| (lo..hi).contains(&self.first_index[&e.case_id])).map(|e| e.case_id.as_str()).collect();
        let own: Vec<Event> = evs.iter().filter(|e| starting.contains(e.case_id.as_str())).cloned().collect();
        let end = self.bounds[j].end;
        group_traces(&own)
            .into_iter()
            .filter(|t| t.events.last().is_some_and(|last| self.policy.is_complete(last, end)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::WEEK;

    fn case(id: &str, t0: i64, acts: &[&str]) -> Vec<Event> {
        acts.iter().enumerate().map(|(i, a)| Event::new(id, *a, "r", t0 + 60 * i as i64)).collect()
    }

    fn proto() -> Protocol {
        let mut evs = Vec::new();
        evs.extend(case("a", 0, &["s", "e"]));
        // straddles the first boundary
        evs.extend(case("b", WEEK - 60, &["s", "x", "e"]));
        evs.extend(case("c", WEEK + 100, &["s", "e"]));
        // starts in the second window, ends in the third
        evs.extend(case("d", 2 * WEEK - 60, &["s", "x", "e"]));
        evs.extend(case("z", 3 * WEEK, &["s"]));
        Protocol::new(evs, 3, CompletionPolicy::with_end_activities(["e"])).unwrap()
    }

    #[test]
    fn windows_cover_the_log() {
        let p = proto();
        assert_eq!(p.k(), 3);
        let mut r = ReadCounter::default();
        let total: usize = (0..3).map(|i| p.window(i, &mut r).events.len()).sum();
        assert_eq!(total, 11);
        assert_eq!(r.events, 11);
    }

    #[test]
    fn complete_traces_exclude_earlier_starts() {
        let p = proto();
        let mut r = ReadCounter::default();
        let ids = |f: Vec<TraceFragment>| f.into_iter().map(|f| f.case_id).collect::<Vec<_>>();
        assert_eq!(ids(p.complete_fragments(0, 0, &mut r)), vec!["a"]);
        assert_eq!(ids(p.complete_fragments(1, 1, &mut r)), vec!["c"]);
        assert_eq!(ids(p.complete_fragments(0, 1, &mut r)), vec!["a", "b", "c"]);
        assert!(r.max_ts <= p.windows()[1].end);
    }

    #[test]
    fn test_log_stays_inside_its_window() {
        let p = proto();
        let mut r = ReadCounter::default();
        let t = p.test_log(1, &mut r);
        assert_eq!(t.iter().map(|t| t.case_id.as_str()).collect::<Vec<_>>(), vec!["c"]);
        assert!(r.max_ts <= p.windows()[1].end);
        let mut r2 = ReadCounter::default();
        assert!(p.test_log(2, &mut r2).is_empty());
    }

    #[test]
    fn empty_log_is_a_plan_error() {
        assert!(matches!(Protocol::new(vec![], 2, CompletionPolicy::default()), Err(PipelineError::Plan(_))));
    }
}
