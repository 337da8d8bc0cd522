use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::features::{arrival_features, branching_features, duration_features, waiting_features, FeatureVector};
use crate::stream::{FragmentKind, TraceFragment};
use crate::tree::{align, Alignment, Move, NodeId, ProcessTree};

/// Labeled examples for every model family, extracted from one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstances {
    /// `(activity, features, seconds)`
    pub duration: Vec<(String, FeatureVector, f64)>,
    /// `(resource, features, seconds)`
    pub waiting: Vec<(String, FeatureVector, f64)>,
    /// `(features, seconds until the next arrival)`
    pub arrival: Vec<(FeatureVector, f64)>,
    /// `(decision point, features, chosen label index)`
    pub branching: Vec<(NodeId, FeatureVector, usize)>,
    /// Fragments whose alignment had a nonzero cost or failed.
    pub skipped_unalignable: usize,
    /// Durations measured as the gap to the previous event of the case
    /// because the event had no start time.
    pub durations_from_gaps: usize,
    /// Latest case arrival seen so far.
    pub last_arrival: Option<i64>,
}

impl TrainingInstances {
    pub fn is_empty(&self) -> bool {
        self.duration.is_empty() && self.waiting.is_empty() && self.arrival.is_empty() && self.branching.is_empty()
    }

    pub fn len(&self) -> usize {
        self.duration.len() + self.waiting.len() + self.arrival.len() + self.branching.len()
    }
}

/// Nearest-rank 99th percentile.
fn p99(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Extracts training instances from the fragments of one window.
///
/// Durations come from start/complete pairs; events without a start use the
/// gap to the previous event of their case, capped at the 99th percentile
/// of such gaps in the batch. Waiting runs from the previous completion in
/// the case to the event start and is zero when starts are unknown.
/// Arrivals chain `previous_arrival` with the starts of cases beginning in
/// these fragments. Branching labels come from cost-0 alignments on `tree`.
pub fn build_training_instances(fragments: &[TraceFragment], tree: &ProcessTree, previous_arrival: Option<i64>) -> TrainingInstances {
    let mut out = TrainingInstances::default();
    let mut gap_rows: Vec<(String, FeatureVector, f64)> = Vec::new();

    for f in fragments {
        let mut enabled = f.previous_ts;
        for e in &f.events {
            match e.start {
                Some(s) => {
                    let features = duration_features(&e.resource, s, (s - f.case_start).max(0));
                    out.duration.push((e.activity.clone(), features, (e.timestamp - s).max(0) as f64));
                    if let (Some(prev), false) = (enabled, e.resource.is_empty()) {
                        out.waiting.push((e.resource.clone(), waiting_features(&e.activity, prev), (s - prev).max(0) as f64));
                    }
                }
                None => {
                    if let Some(prev) = enabled {
                        let features = duration_features(&e.resource, prev, (prev - f.case_start).max(0));
                        gap_rows.push((e.activity.clone(), features, (e.timestamp - prev).max(0) as f64));
                        if !e.resource.is_empty() {
                            out.waiting.push((e.resource.clone(), waiting_features(&e.activity, prev), 0.0));
                        }
                    }
                }
            }
            enabled = Some(enabled.map_or(e.timestamp, |p| p.max(e.timestamp)));
        }
    }
    if let Some(cap) = p99(&gap_rows.iter().map(|r| r.2).collect::<Vec<_>>()) {
        out.durations_from_gaps = gap_rows.len();
        out.duration.extend(gap_rows.into_iter().map(|(a, x, y)| (a, x, y.min(cap))));
    }

    let mut starts: Vec<i64> = fragments.iter().filter(|f| f.starts_here()).map(|f| f.case_start).collect();
    starts.sort_unstable();
    let mut prev = previous_arrival;
    for s in starts {
        if let Some(p) = prev {
            out.arrival.push((arrival_features(p), (s - p).max(0) as f64));
        }
        prev = Some(prev.map_or(s, |p| p.max(s)));
    }
    out.last_arrival = prev;

    let mut cache: HashMap<(FragmentKind, Vec<String>), Option<Alignment>> = HashMap::new();
    for f in fragments {
        let acts = f.activities();
        let alignment = cache
            .entry((f.kind, acts.clone()))
            .or_insert_with(|| align(tree, &acts, f.kind).ok().filter(|a| a.cost == 0))
            .clone();
        let Some(alignment) = alignment else {
            out.skipped_unalignable += 1;
            continue;
        };
        let mut k = 0usize;
        let (mut prev_act, mut prev_res) = ("", "");
        let mut at = f.events.first().map_or(f.case_start, |e| e.start_or_complete());
        for m in &alignment.moves {
            match m {
                Move::Sync { .. } => {
                    let e = &f.events[k];
                    k += 1;
                    prev_act = &e.activity;
                    prev_res = &e.resource;
                    at = e.timestamp;
                }
                // context before the first visible event is unknown for
                // cases that began in an earlier window
                Move::Decision { .. } if k == 0 && !f.starts_here() => {}
                Move::Decision { node, choice } => {
                    let features = branching_features(prev_act, prev_res, at, (at - f.case_start).max(0));
                    out.branching.push((*node, features, *choice));
                }
                Move::Log { .. } | Move::Model { .. } => {}
            }
        }
    }
    out
}
