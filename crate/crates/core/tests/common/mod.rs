//! Random trees, logs and models shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamsim::descriptive::DescriptiveSet;
use streamsim::learn::{build_training_instances, HoeffdingBoundParams, PredictiveSet};
use streamsim::sim::{BpsModel, ModelVersion};
use streamsim::stream::{group_traces, Event, FragmentKind, Trace, TraceFragment, HOUR};
use streamsim::tree::{language_sample, Operator, ProcessTree, Shape};

pub const MONDAY: i64 = 1_704_067_200;
pub const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub fn random_shape(rng: &mut impl Rng, depth: u32) -> Shape {
    if depth == 0 || rng.random_bool(0.35) {
        return if rng.random_bool(0.1) { Shape::Tau } else { Shape::act(ALPHABET[rng.random_range(0..4)]) };
    }
    let op = [Operator::Sequence, Operator::Xor, Operator::And, Operator::Loop][rng.random_range(0..4)];
    let n = if op == Operator::Loop { 2 } else { rng.random_range(2..4) };
    Shape::Op(op, (0..n).map(|_| random_shape(rng, depth - 1)).collect())
}

/// A random tree with at least one visible activity.
pub fn random_tree(seed: u64) -> ProcessTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let t = ProcessTree::from_shape(random_shape(&mut rng, 3));
        if !t.alphabet().is_empty() {
            return t;
        }
    }
}

/// Cases drawn from the tree's language with random arrivals, durations,
/// waiting times and two resources per activity.
pub fn random_log(tree: &ProcessTree, cases: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut arrival = MONDAY + rng.random_range(0..HOUR);
    for (n, trace) in language_sample(tree, cases, seed).into_iter().enumerate() {
        arrival += rng.random_range(60..2 * HOUR);
        let mut t = arrival;
        for act in trace {
            let start = t + rng.random_range(0..600);
            let end = start + rng.random_range(60..3_600);
            let res = format!("{act}-{}", rng.random_range(1..=2));
            events.push(Event::new(format!("case{n:04}"), act, res, end).with_start(start));
            t = end;
        }
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.case_id.cmp(&b.case_id)));
    events
}

pub fn complete_fragments(traces: &[Trace]) -> Vec<TraceFragment> {
    traces
        .iter()
        .map(|t| TraceFragment {
            case_id: t.case_id.clone(),
            events: t.events.clone(),
            kind: FragmentKind::Complete,
            case_start: t.case_start().unwrap_or(0),
            previous_ts: None,
        })
        .collect()
}

/// A model whose control flow is a random tree and whose parameters are
/// fitted on a log drawn from it.
pub fn random_model(seed: u64) -> BpsModel {
    let tree = random_tree(seed);
    let events = random_log(&tree, 150, seed ^ 0x5eed);
    let frags = complete_fragments(&group_traces(&events));
    let d = DescriptiveSet::from_events(&events);
    let instances = build_training_instances(&frags, &tree, None);
    let params = HoeffdingBoundParams::default().with_grace_period(50);
    let p = PredictiveSet::fit_batch(&instances, &tree, &d, params).expect("valid parameters");
    BpsModel { tree, d, p, version: ModelVersion::default() }
}

/// Minimum transport cost between two weighted point sets, each normalized
/// to unit mass, by successive shortest paths with Bellman-Ford on the
/// residual graph. Independent of the cumulative-difference formulas.
pub fn transport_oracle(a: &[(f64, f64)], b: &[(f64, f64)], cost: impl Fn(f64, f64) -> f64) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().map(|p| p.1).sum(), b.iter().map(|p| p.1).sum());
    // nodes: 0 source, 1..=n supplies, n+1..=n+m demands, n+m+1 sink
    let (n, m) = (a.len(), b.len());
    let sink = n + m + 1;
    struct Edge {
        to: usize,
        cap: f64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); sink + 1];
    let mut add = |edges: &mut Vec<Edge>, u: usize, v: usize, cap: f64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -c });
    };
    for (i, p) in a.iter().enumerate() {
        add(&mut edges, 0, 1 + i, p.1 / ta, 0.0);
    }
    for (j, q) in b.iter().enumerate() {
        add(&mut edges, 1 + n + j, sink, q.1 / tb, 0.0);
    }
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            add(&mut edges, 1 + i, 1 + n + j, f64::INFINITY, cost(p.0, q.0));
        }
    }
    let mut total = 0.0;
    let mut flow = 0.0;
    while flow < 1.0 - 1e-13 {
        let mut dist = vec![f64::INFINITY; sink + 1];
        let mut via: Vec<Option<usize>> = vec![None; sink + 1];
        dist[0] = 0.0;
        for _ in 0..=sink {
            let mut changed = false;
            for u in 0..=sink {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > 1e-15 && dist[u] + ed.cost < dist[ed.to] - 1e-15 {
                        dist[ed.to] = dist[u] + ed.cost;
                        via[ed.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while let Some(e) = via[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = via[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        flow += push;
        total += push * dist[sink];
    }
    total
}
