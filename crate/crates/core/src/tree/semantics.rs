//! Token-free execution state of a process tree: every node is inactive,
//! active or closed. Leaves fire when active; xor nodes and pending loops
//! expose choices.

use std::collections::HashMap;
use std::sync::Arc;

use super::{Node, NodeId, NodeKind, Operator, ProcessTree};

pub(crate) const INACTIVE: u8 = 0;
pub(crate) const ACTIVE: u8 = 1;
pub(crate) const CLOSED: u8 = 2;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CKind {
    Act(u32),
    Tau,
    Seq,
    Xor,
    And,
    Loop,
}

#[derive(Debug, Clone)]
pub(crate) struct CNode {
    pub id: NodeId,
    pub kind: CKind,
    pub parent: u32,
    pub children: Vec<u32>,
    /// Exclusive end of the subtree in pre-order.
    pub end: u32,
}

/// Pre-order flattening of a tree.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub nodes: Vec<CNode>,
    pub labels: Vec<String>,
    pub label_index: HashMap<String, u32>,
}

impl Compiled {
    pub fn new(tree: &ProcessTree) -> Self {
        let mut c = Compiled { nodes: Vec::new(), labels: Vec::new(), label_index: HashMap::new() };
        c.push(tree.root(), NO_PARENT);
        c
    }

    fn push(&mut self, node: &Arc<Node>, parent: u32) -> u32 {
        let idx = self.nodes.len() as u32;
        let kind = match &node.kind {
            NodeKind::Activity(a) => {
                let next = self.labels.len() as u32;
                let l = *self.label_index.entry(a.clone()).or_insert(next);
                if l == next {
                    self.labels.push(a.clone());
                }
                CKind::Act(l)
            }
            NodeKind::Tau => CKind::Tau,
            NodeKind::Operator(op, _) => match op {
                Operator::Sequence => CKind::Seq,
                Operator::Xor => CKind::Xor,
                Operator::And => CKind::And,
                Operator::Loop => CKind::Loop,
            },
        };
        self.nodes.push(CNode { id: node.id, kind, parent, children: Vec::new(), end: 0 });
        let children: Vec<u32> = node.children().iter().map(|c| self.push(c, idx)).collect();
        let end = self.nodes.len() as u32;
        let n = &mut self.nodes[idx as usize];
        n.children = children;
        n.end = end;
        idx
    }

    pub fn initial(&self) -> Vec<u8> {
        let mut s = vec![INACTIVE; self.nodes.len()];
        self.activate(&mut s, 0);
        s
    }

    pub fn is_final(&self, s: &[u8]) -> bool {
        s[0] == CLOSED
    }

    fn activate(&self, s: &mut [u8], i: u32) {
        s[i as usize] = ACTIVE;
        let n = &self.nodes[i as usize];
        match n.kind {
            CKind::Seq | CKind::Loop => self.activate(s, n.children[0]),
            CKind::And => {
                for &c in &n.children {
                    self.activate(s, c);
                }
            }
            _ => {}
        }
    }

    fn reset(&self, s: &mut [u8], i: u32) {
        let n = &self.nodes[i as usize];
        s[i as usize..n.end as usize].fill(INACTIVE);
    }

    fn close(&self, s: &mut [u8], i: u32) {
        let n = &self.nodes[i as usize];
        s[i as usize + 1..n.end as usize].fill(INACTIVE);
        s[i as usize] = CLOSED;
        if n.parent == NO_PARENT {
            return;
        }
        let p = &self.nodes[n.parent as usize];
        match p.kind {
            CKind::Seq => {
                let pos = p.children.iter().position(|&c| c == i).expect("child of parent");
                if pos + 1 == p.children.len() {
                    self.close(s, n.parent);
                } else {
                    self.activate(s, p.children[pos + 1]);
                }
            }
            CKind::Xor => self.close(s, n.parent),
            CKind::And => {
                if p.children.iter().all(|&c| s[c as usize] == CLOSED) {
                    self.close(s, n.parent);
                }
            }
            CKind::Loop => {
                if p.children[1] == i {
                    self.reset(s, i);
                    self.activate(s, p.children[0]);
                }
                // closing the body leaves the exit/redo decision pending
            }
            CKind::Act(_) | CKind::Tau => unreachable!("leaf parent"),
        }
    }

    pub fn enabled(&self, s: &[u8]) -> Vec<Step> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if s[i] != ACTIVE {
                continue;
            }
            let i = i as u32;
            match n.kind {
                CKind::Act(_) | CKind::Tau => out.push(Step::Fire(i)),
                CKind::Xor if n.children.iter().all(|&c| s[c as usize] == INACTIVE) => {
                    out.extend((0..n.children.len() as u32).map(|c| Step::Choose(i, c)));
                }
                CKind::Loop if s[n.children[0] as usize] == CLOSED => {
                    out.push(Step::Exit(i));
                    out.push(Step::Redo(i));
                }
                _ => {}
            }
        }
        out
    }

    pub fn apply(&self, s: &mut [u8], step: Step) {
        match step {
            Step::Fire(i) | Step::Exit(i) => self.close(s, i),
            Step::Choose(i, c) => self.activate(s, self.nodes[i as usize].children[c as usize]),
            Step::Redo(i) => {
                let n = &self.nodes[i as usize];
                self.reset(s, n.children[0]);
                self.activate(s, n.children[1]);
            }
        }
    }

    pub fn label_of(&self, i: u32) -> Option<&str> {
        match self.nodes[i as usize].kind {
            CKind::Act(l) => Some(&self.labels[l as usize]),
            _ => None,
        }
    }
}

/// One transition of the execution state. Indices refer to pre-order
/// positions in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// Execute a leaf (activity or τ).
    Fire(u32),
    /// Pick child `.1` of xor node `.0`.
    Choose(u32, u32),
    /// Leave a loop whose body has completed.
    Exit(u32),
    /// Run the redo part of a loop whose body has completed.
    Redo(u32),
}

/// Execution state of one case.
#[derive(Debug, Clone)]
pub struct CaseRuntime {
    net: Arc<Compiled>,
    state: Vec<u8>,
}

impl CaseRuntime {
    pub fn new(tree: &ProcessTree) -> Self {
        Self::from_compiled(Arc::new(Compiled::new(tree)))
    }

    pub(crate) fn from_compiled(net: Arc<Compiled>) -> Self {
        let state = net.initial();
        CaseRuntime { net, state }
    }

    pub fn enabled(&self) -> Vec<Step> {
        self.net.enabled(&self.state)
    }

    pub fn apply(&mut self, step: Step) {
        self.net.apply(&mut self.state, step)
    }

    pub fn is_final(&self) -> bool {
        self.net.is_final(&self.state)
    }

    pub fn node_id(&self, idx: u32) -> NodeId {
        self.net.nodes[idx as usize].id
    }

    /// Activity label of a leaf, `None` for τ and operators.
    pub fn label(&self, idx: u32) -> Option<&str> {
        self.net.label_of(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(tree: &str, choose: impl Fn(&[Step]) -> Step) -> Vec<String> {
        let t = ProcessTree::parse(tree).unwrap();
        let mut rt = CaseRuntime::new(&t);
        let mut out = Vec::new();
        for _ in 0..100 {
            if rt.is_final() {
                return out;
            }
            let steps = rt.enabled();
            let s = choose(&steps);
            if let Step::Fire(i) = s {
                if let Some(l) = rt.label(i) {
                    out.push(l.to_string());
                }
            }
            rt.apply(s);
        }
        panic!("did not terminate");
    }

    #[test]
    fn sequence_runs_in_order() {
        assert_eq!(run("→(a, b, c)", |s| s[0]), vec!["a", "b", "c"]);
    }

    #[test]
    fn xor_and_parallel() {
        assert_eq!(run("×(a, b)", |s| *s.last().unwrap()), vec!["b"]);
        assert_eq!(run("∧(a, b)", |s| *s.last().unwrap()), vec!["b", "a"]);
    }

    #[test]
    fn loop_redo_then_exit() {
        let t = ProcessTree::parse("⟲(a, b)").unwrap();
        let mut rt = CaseRuntime::new(&t);
        rt.apply(Step::Fire(1));
        assert_eq!(rt.enabled(), vec![Step::Exit(0), Step::Redo(0)]);
        rt.apply(Step::Redo(0));
        assert_eq!(rt.enabled(), vec![Step::Fire(2)]);
        rt.apply(Step::Fire(2));
        assert_eq!(rt.enabled(), vec![Step::Fire(1)]);
        rt.apply(Step::Fire(1));
        rt.apply(Step::Exit(0));
        assert!(rt.is_final());
    }
}
