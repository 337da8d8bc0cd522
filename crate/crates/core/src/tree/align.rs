//! Optimal alignments of activity sequences against a process tree,
//! computed by Dijkstra search over (trace position, execution state).

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::semantics::{CKind, Compiled, Step};
use super::{NodeId, ProcessTree, TreeError};
use crate::stream::FragmentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Maximum number of expanded search states.
    pub max_states: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { max_states: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    Sync { activity: String, node: NodeId },
    Log { activity: String },
    /// Model move on a visible leaf (`activity` set) or τ (`None`).
    Model { node: NodeId, activity: Option<String> },
    /// Outcome of a choice: xor child position, or 0 = exit / 1 = redo.
    Decision { node: NodeId, choice: usize },
}

impl Move {
    pub fn cost(&self) -> u32 {
        match self {
            Move::Log { .. } | Move::Model { activity: Some(_), .. } => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// Moves after the model was entered; moves that only position the model
    /// before a fragment's first event (open start) are omitted.
    pub moves: Vec<Move>,
    pub cost: u32,
    pub open_start: bool,
    pub open_end: bool,
}

impl Alignment {
    /// Activities consumed by log and synchronous moves.
    pub fn log_projection(&self) -> Vec<&str> {
        self.moves
            .iter()
            .filter_map(|m| match m {
                Move::Sync { activity, .. } | Move::Log { activity } => Some(activity.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Optimal alignment under the semantics of `kind`: prefixes may stop
/// anywhere, postfixes may start anywhere reachable, infixes both.
pub fn align(tree: &ProcessTree, activities: &[String], kind: FragmentKind) -> Result<Alignment, TreeError> {
    align_with(tree, activities, kind, &AlignConfig::default())
}

pub fn align_with(tree: &ProcessTree, activities: &[String], kind: FragmentKind, cfg: &AlignConfig) -> Result<Alignment, TreeError> {
    let net = Compiled::new(tree);
    align_compiled(&net, activities, kind, None, cfg)?.ok_or(TreeError::NoAlignment)
}

/// Whether the sequence replays with cost 0.
pub fn fits(tree: &ProcessTree, activities: &[String], kind: FragmentKind) -> Result<bool, TreeError> {
    let net = Compiled::new(tree);
    Ok(align_compiled(&net, activities, kind, Some(0), &AlignConfig::default())?.is_some())
}

#[derive(Clone, Copy)]
enum Raw {
    Log(u32),
    Sync(u32),
    Model(u32),
    Step(Step),
}

struct SearchNode {
    pre: bool,
    state: Vec<u8>,
    parent: u32,
    mv: Option<(Raw, bool)>,
}

pub(crate) fn align_compiled(
    net: &Compiled,
    activities: &[String],
    kind: FragmentKind,
    max_cost: Option<u32>,
    cfg: &AlignConfig,
) -> Result<Option<Alignment>, TreeError> {
    let trace: Vec<Option<u32>> = activities.iter().map(|a| net.label_index.get(a).copied()).collect();
    let len = trace.len() as u32;
    let open_end = kind.open_end();
    let open_start = kind.open_start();

    let mut arena = vec![SearchNode { pre: open_start, state: net.initial(), parent: u32::MAX, mv: None }];
    let mut best: HashMap<(u32, bool, Vec<u8>), u32> = HashMap::new();
    best.insert((0, open_start, arena[0].state.clone()), 0);
    let mut heap = BinaryHeap::new();
    heap.push((Reverse(0u32), 0u32, Reverse(0u32)));
    let mut expanded = 0usize;

    while let Some((Reverse(g), pos, Reverse(idx))) = heap.pop() {
        let node = &arena[idx as usize];
        let key = (pos, node.pre, node.state.clone());
        if best.get(&key).is_some_and(|&b| b < g) {
            continue;
        }
        if pos == len && (open_end || net.is_final(&node.state)) {
            return Ok(Some(reconstruct(net, &arena, idx, activities, g, open_start, open_end)));
        }
        expanded += 1;
        if expanded > cfg.max_states {
            return Err(TreeError::StateSpaceBudgetExceeded(cfg.max_states));
        }

        let pre = node.pre;
        let state = node.state.clone();
        let mut succ: Vec<(u32, bool, Vec<u8>, u32, Raw)> = Vec::new();
        if pos < len {
            succ.push((pos + 1, false, state.clone(), 1, Raw::Log(pos)));
        }
        for step in net.enabled(&state) {
            let mut next = state.clone();
            net.apply(&mut next, step);
            match step {
                Step::Fire(i) => match net.nodes[i as usize].kind {
                    CKind::Act(l) => {
                        if pos < len && trace[pos as usize] == Some(l) {
                            succ.push((pos + 1, false, next.clone(), 0, Raw::Sync(i)));
                        }
                        succ.push((pos, pre, next, u32::from(!pre), Raw::Model(i)));
                    }
                    _ => succ.push((pos, pre, next, 0, Raw::Step(step))),
                },
                _ => succ.push((pos, pre, next, 0, Raw::Step(step))),
            }
        }

        for (npos, npre, nstate, c, raw) in succ {
            let ng = g + c;
            if max_cost.is_some_and(|m| ng > m) {
                continue;
            }
            let recorded = matches!(raw, Raw::Log(_) | Raw::Sync(_)) || !pre;
            match best.entry((npos, npre, nstate.clone())) {
                Entry::Occupied(mut e) => {
                    if *e.get() <= ng {
                        continue;
                    }
                    e.insert(ng);
                }
                Entry::Vacant(e) => {
                    e.insert(ng);
                }
            }
            let nidx = arena.len() as u32;
            arena.push(SearchNode { pre: npre, state: nstate, parent: idx, mv: Some((raw, recorded)) });
            heap.push((Reverse(ng), npos, Reverse(nidx)));
        }
    }
    Ok(None)
}

fn reconstruct(
    net: &Compiled,
    arena: &[SearchNode],
    mut idx: u32,
    activities: &[String],
    cost: u32,
    open_start: bool,
    open_end: bool,
) -> Alignment {
    let mut moves = Vec::new();
    while let Some((raw, recorded)) = arena[idx as usize].mv {
        if recorded {
            let id = |i: u32| net.nodes[i as usize].id;
            moves.push(match raw {
                Raw::Log(p) => Move::Log { activity: activities[p as usize].clone() },
                Raw::Sync(i) => Move::Sync { activity: net.label_of(i).unwrap_or_default().to_string(), node: id(i) },
                Raw::Model(i) => Move::Model { node: id(i), activity: net.label_of(i).map(str::to_string) },
                Raw::Step(Step::Fire(i)) => Move::Model { node: id(i), activity: None },
                Raw::Step(Step::Choose(i, c)) => Move::Decision { node: id(i), choice: c as usize },
                Raw::Step(Step::Exit(i)) => Move::Decision { node: id(i), choice: 0 },
                Raw::Step(Step::Redo(i)) => Move::Decision { node: id(i), choice: 1 },
            });
        }
        idx = arena[idx as usize].parent;
    }
    moves.reverse();
    Alignment { moves, cost, open_start, open_end }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acts(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn cost(tree: &str, trace: &str, kind: FragmentKind) -> u32 {
        align(&ProcessTree::parse(tree).unwrap(), &acts(trace), kind).unwrap().cost
    }

    #[test]
    fn spec_examples() {
        assert_eq!(cost("→(a, b)", "a b", FragmentKind::Complete), 0);
        assert_eq!(cost("→(a, b)", "a", FragmentKind::Prefix), 0);
        let t = ProcessTree::parse("→(a, b)").unwrap();
        let al = align(&t, &acts("a c b"), FragmentKind::Complete).unwrap();
        assert_eq!(al.cost, 1);
        assert_eq!(al.moves.iter().filter(|m| matches!(m, Move::Log { .. })).count(), 1);
        assert!(al.moves.contains(&Move::Log { activity: "c".into() }));
        assert_eq!(al.log_projection(), vec!["a", "c", "b"]);
    }

    #[test]
    fn open_start_and_infix() {
        assert_eq!(cost("→(a, b, c)", "b c", FragmentKind::Postfix), 0);
        assert_eq!(cost("→(a, b, c)", "b c", FragmentKind::Complete), 1);
        assert_eq!(cost("→(a, b, c)", "b", FragmentKind::Infix), 0);
        assert_eq!(cost("→(a, b, c)", "", FragmentKind::Complete), 3);
        assert_eq!(cost("→(a, b, c)", "c a", FragmentKind::Infix), 1);
    }

    #[test]
    fn decisions_recorded() {
        let t = ProcessTree::parse("→(r, ×(m, x), n)").unwrap();
        let al = align(&t, &acts("r x n"), FragmentKind::Complete).unwrap();
        let xor = t.decision_points()[0].id;
        assert!(al.moves.contains(&Move::Decision { node: xor, choice: 1 }));
    }

    #[test]
    fn loops_and_budget() {
        assert_eq!(cost("⟲(a, b)", "a b a b a", FragmentKind::Complete), 0);
        assert_eq!(cost("⟲(a, τ)", "a a a", FragmentKind::Complete), 0);
        let t = ProcessTree::parse("∧(a, b, c, d, e, f)").unwrap();
        let err = align_with(&t, &acts("x y z"), FragmentKind::Complete, &AlignConfig { max_states: 5 });
        assert_eq!(err, Err(TreeError::StateSpaceBudgetExceeded(5)));
    }

    #[test]
    fn fits_uses_zero_budget() {
        let t = ProcessTree::parse("→(a, ×(b, τ))").unwrap();
        assert!(fits(&t, &acts("a"), FragmentKind::Complete).unwrap());
        assert!(fits(&t, &acts("a b"), FragmentKind::Complete).unwrap());
        assert!(!fits(&t, &acts("b a"), FragmentKind::Complete).unwrap());
    }

    /// Visible traces of length at most `max_len`, by exhaustive search of
    /// the execution state space.
    /// Visible traces up to `max_len`; with `prefixes`, every reachable
    /// visible sequence (trees are sound, so each one extends to a trace).
    fn bounded_language(net: &Compiled, max_len: usize, prefixes: bool) -> std::collections::BTreeSet<Vec<u32>> {
        use std::collections::{BTreeSet, HashSet};
        let mut out = BTreeSet::new();
        let mut seen = HashSet::new();
        let mut stack = vec![(net.initial(), Vec::<u32>::new())];
        while let Some((st, tr)) = stack.pop() {
            if !seen.insert((st.clone(), tr.clone())) {
                continue;
            }
            if prefixes {
                out.insert(tr.clone());
            }
            if net.is_final(&st) {
                out.insert(tr.clone());
                continue;
            }
            for step in net.enabled(&st) {
                let mut next = st.clone();
                net.apply(&mut next, step);
                let mut t = tr.clone();
                if let Step::Fire(i) = step {
                    if let CKind::Act(l) = net.nodes[i as usize].kind {
                        t.push(l);
                    }
                }
                if t.len() <= max_len {
                    stack.push((next, t));
                }
            }
        }
        out
    }

    fn shortest_trace(net: &Compiled) -> usize {
        use std::collections::{HashMap, VecDeque};
        let mut dist: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut queue = VecDeque::from([(net.initial(), 0usize)]);
        while let Some((st, d)) = queue.pop_front() {
            if dist.get(&st).is_some_and(|&x| x <= d) {
                continue;
            }
            dist.insert(st.clone(), d);
            if net.is_final(&st) {
                return d;
            }
            for step in net.enabled(&st) {
                let mut next = st.clone();
                net.apply(&mut next, step);
                let visible = matches!(step, Step::Fire(i) if matches!(net.nodes[i as usize].kind, CKind::Act(_)));
                if visible {
                    queue.push_back((next, d + 1));
                } else {
                    queue.push_front((next, d));
                }
            }
        }
        unreachable!("every tree has a finite run")
    }

    fn lcs(a: &[u32], b: &[u32]) -> usize {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                dp[i][j] = if a[i - 1] == b[j - 1] { dp[i - 1][j - 1] + 1 } else { dp[i - 1][j].max(dp[i][j - 1]) };
            }
        }
        dp[a.len()][b.len()]
    }

    /// Minimum alignment cost by enumeration: `|t| + |m| - 2 lcs(t, m)` over
    /// model traces `m` (or their prefixes when the end is open).
    fn oracle(net: &Compiled, trace: &[String], prefix: bool) -> u32 {
        let enc: Vec<u32> = trace.iter().map(|a| net.label_index.get(a).copied().unwrap_or(u32::MAX)).collect();
        // a model trace m costs at least |m| - |t|; the trivial alignment costs
        // |t| + shortest (complete) or |t| (prefix)
        let lang = if prefix {
            bounded_language(net, 2 * enc.len(), true)
        } else {
            bounded_language(net, 2 * enc.len() + shortest_trace(net), false)
        };
        let mut best = u32::MAX;
        for m in &lang {
            let c = enc.len() + m.len() - 2 * lcs(&enc, m);
            best = best.min(c as u32);
        }
        best
    }

    use proptest::prelude::*;

    fn small_shape() -> impl Strategy<Value = super::super::Shape> {
        use super::super::{Operator, Shape};
        let leaf = prop_oneof![
            4 => prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(Shape::act),
            1 => Just(Shape::Tau),
        ];
        leaf.prop_recursive(3, 10, 3, |inner| {
            (0..4usize, prop::collection::vec(inner, 2..4)).prop_map(|(op, ch)| {
                Shape::Op([Operator::Sequence, Operator::Xor, Operator::And, Operator::Loop][op], ch)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn cost_matches_enumeration(
            shape in small_shape(),
            trace in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=6),
            prefix in any::<bool>(),
        ) {
            let tree = ProcessTree::from_shape(shape);
            let net = Compiled::new(&tree);
            let trace: Vec<String> = trace.into_iter().map(str::to_string).collect();
            let kind = if prefix { FragmentKind::Prefix } else { FragmentKind::Complete };
            let al = align(&tree, &trace, kind).unwrap();
            prop_assert_eq!(al.cost, oracle(&net, &trace, prefix), "{} on {:?}", tree, trace);
            prop_assert_eq!(al.log_projection(), trace.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert_eq!(al.cost, al.moves.iter().map(Move::cost).sum::<u32>());
        }
    }
}
