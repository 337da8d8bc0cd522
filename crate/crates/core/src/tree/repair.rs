//! Language-monotone repair of a process tree so that new fragments fit.

use std::collections::HashSet;
use std::sync::Arc;

use super::align::{align_compiled, AlignConfig, Alignment, Move};
use super::semantics::Compiled;
use super::{Node, NodeId, NodeKind, Operator, ProcessTree, Shape, TreeError};
use crate::stream::{FragmentKind, TraceFragment};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub tree: ProcessTree,
    /// Case ids of fragments whose alignment exceeded the search budget.
    pub rejected: Vec<String>,
    /// Number of rewrites applied.
    pub repairs: usize,
}

/// Repairs `tree` until every fragment aligns with cost 0 under its kind
/// semantics. Only optional behaviour is added, so every trace accepted
/// before is still accepted.
///
/// Rewrites, applied to the first deviation of the current alignment:
/// * a model move on a visible leaf `v` turns `v` into `×(v, τ)`;
/// * a run of log moves becomes a chain of `×(a, τ)` nodes placed between
///   the surrounding synchronous moves: into their common sequence ancestor
///   when one exists, otherwise right after the preceding leaf (or before
///   the following one).
pub fn incremental_update(tree: &ProcessTree, fragments: &[TraceFragment]) -> UpdateOutcome {
    incremental_update_with(tree, fragments, &AlignConfig::default())
}

pub fn incremental_update_with(tree: &ProcessTree, fragments: &[TraceFragment], cfg: &AlignConfig) -> UpdateOutcome {
    let mut current = tree.clone();
    let mut rejected = Vec::new();
    let mut repairs = 0;
    let mut seen: HashSet<(FragmentKind, Vec<String>)> = HashSet::new();
    for frag in fragments {
        let acts = frag.activities();
        if !seen.insert((frag.kind, acts.clone())) {
            continue;
        }
        match repair_one(&current, &acts, frag.kind, cfg) {
            Ok((t, n)) => {
                current = t;
                repairs += n;
            }
            Err(_) => rejected.push(frag.case_id.clone()),
        }
    }
    UpdateOutcome { tree: current, rejected, repairs }
}

fn repair_one(tree: &ProcessTree, acts: &[String], kind: FragmentKind, cfg: &AlignConfig) -> Result<(ProcessTree, usize), TreeError> {
    let mut current = tree.clone();
    let mut repairs = 0;
    let mut limit = None;
    loop {
        let net = Compiled::new(&current);
        let al = align_compiled(&net, acts, kind, None, cfg)?.ok_or(TreeError::NoAlignment)?;
        if al.cost == 0 {
            return Ok((current, repairs));
        }
        // each rewrite lowers the cost by at least one
        let cap = *limit.get_or_insert(al.cost as usize + 1);
        if repairs >= cap {
            return Err(TreeError::NoAlignment);
        }
        current = repair_first_deviation(&current, &al, kind);
        repairs += 1;
    }
}

fn repair_first_deviation(tree: &ProcessTree, al: &Alignment, kind: FragmentKind) -> ProcessTree {
    let mut preceding = None;
    for (i, m) in al.moves.iter().enumerate() {
        match m {
            Move::Sync { node, .. } => preceding = Some(*node),
            Move::Model { node, activity: Some(_) } => return make_optional(tree, *node),
            Move::Log { .. } => {
                let mut run = Vec::new();
                let mut following = None;
                for m in &al.moves[i..] {
                    match m {
                        Move::Log { activity } => run.push(activity.clone()),
                        Move::Sync { node, .. } => {
                            following = Some(*node);
                            break;
                        }
                        _ => {}
                    }
                }
                return insert_optional(tree, &run, preceding, following, kind);
            }
            _ => {}
        }
    }
    unreachable!("alignment with positive cost has a deviation")
}

fn optional_chain(tree: &mut ProcessTree, acts: &[String]) -> Vec<Arc<Node>> {
    acts.iter().map(|a| tree.alloc(&Shape::xor(vec![Shape::act(a), Shape::Tau]))).collect()
}

fn make_optional(tree: &ProcessTree, v: NodeId) -> ProcessTree {
    let mut t = tree.clone();
    let tau = t.alloc(&Shape::Tau);
    let id = t.fresh_id();
    t.replace(v, |old| Arc::new(Node { id, kind: NodeKind::Operator(Operator::Xor, vec![old.clone(), tau]) }))
}

fn splice(tree: &ProcessTree, seq: NodeId, at: usize, items: Vec<Arc<Node>>) -> ProcessTree {
    tree.replace(seq, |old| {
        let mut ch = old.children().to_vec();
        ch.splice(at..at, items);
        Arc::new(Node { id: old.id, kind: NodeKind::Operator(Operator::Sequence, ch) })
    })
}

/// Places `items` directly before (`after = false`) or after `anchor`.
fn place_next_to(tree: &mut ProcessTree, anchor: NodeId, items: Vec<Arc<Node>>, after: bool) -> ProcessTree {
    if let Some(parent) = tree.parent_of(anchor) {
        if parent.operator() == Some(Operator::Sequence) {
            let pos = parent.children().iter().position(|c| c.id == anchor).expect("child of parent");
            return splice(tree, parent.id, pos + usize::from(after), items);
        }
    }
    let id = tree.fresh_id();
    tree.replace(anchor, |old| {
        let mut ch = items;
        if after {
            ch.insert(0, old.clone());
        } else {
            ch.push(old.clone());
        }
        Arc::new(Node { id, kind: NodeKind::Operator(Operator::Sequence, ch) })
    })
}

fn insert_optional(tree: &ProcessTree, acts: &[String], p: Option<NodeId>, f: Option<NodeId>, kind: FragmentKind) -> ProcessTree {
    let mut t = tree.clone();
    let items = optional_chain(&mut t, acts);
    match (p, f) {
        (Some(p), Some(f)) => {
            let pp = t.path_to(p).expect("preceding leaf in tree");
            let pf = t.path_to(f).expect("following leaf in tree");
            let common = pp.iter().zip(&pf).take_while(|(a, b)| a.id == b.id).count();
            let lca = &pp[common - 1];
            if lca.operator() == Some(Operator::Sequence) && common < pp.len() && common < pf.len() {
                let i = lca.children().iter().position(|c| c.id == pp[common].id).expect("child");
                let j = lca.children().iter().position(|c| c.id == pf[common].id).expect("child");
                if i < j {
                    return splice(&t, lca.id, i + 1, items);
                }
            }
            place_next_to(&mut t, p, items, true)
        }
        (Some(p), None) => place_next_to(&mut t, p, items, true),
        (None, Some(f)) => place_next_to(&mut t, f, items, false),
        (None, None) => {
            let root = t.root().clone();
            // a fragment entering mid-execution reaches the end of the model
            // for free, so its behaviour goes last; otherwise first
            let at_end = kind.open_start();
            if root.operator() == Some(Operator::Sequence) {
                let at = if at_end { root.children().len() } else { 0 };
                return splice(&t, root.id, at, items);
            }
            let id = t.fresh_id();
            let mut ch = items;
            if at_end {
                ch.insert(0, root);
            } else {
                ch.push(root);
            }
            let next = t.next_id();
            t.with_root(Arc::new(Node { id, kind: NodeKind::Operator(Operator::Sequence, ch) }), next)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Event;
    use crate::tree::{fits, language_sample};

    fn frag(acts: &str, kind: FragmentKind) -> TraceFragment {
        let events = acts.split_whitespace().enumerate().map(|(i, a)| Event::new("c", a, "", i as i64)).collect();
        TraceFragment { case_id: "c".into(), events, kind, case_start: 0, previous_ts: None }
    }

    fn acts(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn fitting_fragment_leaves_tree_unchanged() {
        let t = ProcessTree::parse("→(a, b)").unwrap();
        let out = incremental_update(&t, &[frag("a b", FragmentKind::Complete)]);
        assert_eq!(out.tree, t);
        assert_eq!(out.repairs, 0);
    }

    #[test]
    fn missing_activity_becomes_skippable() {
        let t = ProcessTree::parse("→(a, b)").unwrap();
        let out = incremental_update(&t, &[frag("a", FragmentKind::Complete)]);
        assert_eq!(out.tree.to_string(), "→(a, ×(b, τ))");
        for s in ["a", "a b"] {
            assert!(fits(&out.tree, &acts(s), FragmentKind::Complete).unwrap());
        }
    }

    #[test]
    fn loan_offer_inserted_before_notify() {
        let t = ProcessTree::parse("→(request, ×(manual, automated), notify)").unwrap();
        let xor = t.decision_points()[0].id;
        let out = incremental_update(&t, &[frag("request automated loan_offer notify", FragmentKind::Complete)]);
        assert_eq!(out.tree.to_string(), "→(request, ×(manual, automated), ×(loan_offer, τ), notify)");
        assert!(fits(&out.tree, &acts("request manual notify"), FragmentKind::Complete).unwrap());
        let dps = out.tree.decision_points();
        assert_eq!(dps[0].id, xor);
        assert_eq!(dps.len(), 2);
    }

    #[test]
    fn repeated_update_is_idempotent() {
        let t = ProcessTree::parse("→(a, b)").unwrap();
        let f = [frag("a x b", FragmentKind::Complete)];
        let once = incremental_update(&t, &f).tree;
        let twice = incremental_update(&once, &f).tree;
        assert_eq!(once, twice);
    }

    #[test]
    fn open_start_fragment_without_sync() {
        let t = ProcessTree::parse("×(a, b)").unwrap();
        for kind in [FragmentKind::Postfix, FragmentKind::Prefix, FragmentKind::Infix, FragmentKind::Complete] {
            let out = incremental_update(&t, &[frag("z y", kind)]);
            assert!(fits(&out.tree, &acts("z y"), kind).unwrap(), "{kind:?} {}", out.tree);
            for s in language_sample(&t, 20, 0) {
                assert!(fits(&out.tree, &s, FragmentKind::Complete).unwrap());
            }
        }
    }

    #[test]
    fn parallel_and_loop_contexts() {
        let t = ProcessTree::parse("→(s, ∧(⟲(a, b), c), e)").unwrap();
        let frags = [
            frag("s a c q b a e", FragmentKind::Complete),
            frag("c e", FragmentKind::Postfix),
            frag("s c", FragmentKind::Prefix),
            frag("x c x", FragmentKind::Infix),
        ];
        let out = incremental_update(&t, &frags);
        assert!(out.rejected.is_empty());
        for f in &frags {
            assert!(fits(&out.tree, &f.activities(), f.kind).unwrap(), "{:?} on {}", f.activities(), out.tree);
        }
        for s in language_sample(&t, 200, 5) {
            assert!(fits(&out.tree, &s, FragmentKind::Complete).unwrap());
        }
    }
}
