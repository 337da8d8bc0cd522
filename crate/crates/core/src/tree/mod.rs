//! Block-structured control-flow models (process trees): construction,
//! notation, execution semantics, alignments, discovery and repair.

mod align;
mod discovery;
mod notation;
mod repair;
mod sample;
pub(crate) mod semantics;

pub use align::{align, align_with, fits, AlignConfig, Alignment, Move};
pub use discovery::{discover_initial_tree, DEFAULT_NOISE_THRESHOLD};
pub use notation::ParseError;
pub use repair::{incremental_update, incremental_update_with, UpdateOutcome};
pub use sample::language_sample;
pub use semantics::{CaseRuntime, Step};

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("no traces to discover from")]
    EmptyInput,
    #[error("alignment explored more than {0} states")]
    StateSpaceBudgetExceeded(usize),
    #[error("no alignment exists within the cost bound")]
    NoAlignment,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("no branching model for decision point {0}")]
    MissingBranchModel(NodeId),
}

/// Identifier assigned when a node is created and never reused within a
/// model lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Sequence,
    Xor,
    And,
    Loop,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Sequence => "→",
            Operator::Xor => "×",
            Operator::And => "∧",
            Operator::Loop => "⟲",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Activity(String),
    Tau,
    Operator(Operator, Vec<Arc<Node>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl Node {
    pub fn children(&self) -> &[Arc<Node>] {
        match &self.kind {
            NodeKind::Operator(_, ch) => ch,
            _ => &[],
        }
    }

    pub fn operator(&self) -> Option<Operator> {
        match &self.kind {
            NodeKind::Operator(op, _) => Some(*op),
            _ => None,
        }
    }

    pub fn activity(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Activity(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self.kind, NodeKind::Operator(..))
    }

    fn contains(&self, id: NodeId) -> bool {
        self.id == id || self.children().iter().any(|c| c.contains(id))
    }

    fn visit<'a>(self: &'a Arc<Node>, f: &mut impl FnMut(&'a Arc<Node>)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }
}

/// Id-free tree description used to build trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    Activity(String),
    Tau,
    Op(Operator, Vec<Shape>),
}

impl Shape {
    pub fn act(name: &str) -> Shape {
        Shape::Activity(name.to_string())
    }

    pub fn seq(children: Vec<Shape>) -> Shape {
        Shape::Op(Operator::Sequence, children)
    }

    pub fn xor(children: Vec<Shape>) -> Shape {
        Shape::Op(Operator::Xor, children)
    }

    pub fn and(children: Vec<Shape>) -> Shape {
        Shape::Op(Operator::And, children)
    }

    pub fn looped(body: Shape, redo: Shape) -> Shape {
        Shape::Op(Operator::Loop, vec![body, redo])
    }

    /// Collapses single-child operators, flattens directly nested
    /// sequence/xor/and operators of the same kind and rewrites n-ary loops
    /// `⟲(a, b, c)` into `⟲(a, ×(b, c))`.
    pub fn normalize(self) -> Shape {
        match self {
            Shape::Op(op, children) => {
                let mut flat = Vec::with_capacity(children.len());
                for c in children.into_iter().map(Shape::normalize) {
                    match c {
                        Shape::Op(inner, grand) if inner == op && op != Operator::Loop => flat.extend(grand),
                        other => flat.push(other),
                    }
                }
                match op {
                    Operator::Loop => {
                        let mut it = flat.into_iter();
                        let body = it.next().unwrap_or(Shape::Tau);
                        let rest: Vec<Shape> = it.collect();
                        let redo = match rest.len() {
                            0 => Shape::Tau,
                            1 => rest.into_iter().next().unwrap(),
                            _ => Shape::xor(rest).normalize(),
                        };
                        Shape::Op(Operator::Loop, vec![body, redo])
                    }
                    _ if flat.is_empty() => Shape::Tau,
                    _ if flat.len() == 1 => flat.pop().unwrap(),
                    _ => Shape::Op(op, flat),
                }
            }
            leaf => leaf,
        }
    }
}

/// A process tree with stable node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTree {
    root: Arc<Node>,
    next_id: u64,
}

impl ProcessTree {
    /// Builds a normalized tree, numbering nodes in pre-order.
    pub fn from_shape(shape: Shape) -> Self {
        let mut next_id = 0;
        let root = build(&shape.normalize(), &mut next_id);
        ProcessTree { root, next_id }
    }

    pub fn root(&self) -> &Arc<Node> {
        &self.root
    }

    pub fn shape(&self) -> Shape {
        to_shape(&self.root)
    }

    /// Parses the textual notation, e.g. `→(a, ×(b, τ), ∧(c, d), ⟲(e, f))`.
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        Ok(ProcessTree::from_shape(notation::parse(text)?))
    }

    pub fn nodes(&self) -> Vec<&Arc<Node>> {
        let mut out = Vec::new();
        self.root.visit(&mut |n| out.push(n));
        out
    }

    pub fn find(&self, id: NodeId) -> Option<&Arc<Node>> {
        self.nodes().into_iter().find(|n| n.id == id)
    }

    /// Visible activity labels.
    pub fn alphabet(&self) -> BTreeSet<String> {
        self.nodes().into_iter().filter_map(|n| n.activity().map(str::to_string)).collect()
    }

    /// Xor nodes and loop nodes (whose choice is exit or redo), in pre-order.
    pub fn decision_points(&self) -> Vec<DecisionPoint> {
        self.nodes()
            .into_iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Operator(Operator::Xor, ch) => Some(DecisionPoint {
                    id: n.id,
                    kind: Operator::Xor,
                    labels: ch.iter().map(|c| notation::print(c)).collect(),
                }),
                NodeKind::Operator(Operator::Loop, _) => Some(DecisionPoint {
                    id: n.id,
                    kind: Operator::Loop,
                    labels: vec![LOOP_EXIT.to_string(), LOOP_REDO.to_string()],
                }),
                _ => None,
            })
            .collect()
    }

    /// Chain of nodes from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Option<Vec<Arc<Node>>> {
        fn go(n: &Arc<Node>, id: NodeId, path: &mut Vec<Arc<Node>>) -> bool {
            path.push(n.clone());
            if n.id == id || n.children().iter().any(|c| go(c, id, path)) {
                return true;
            }
            path.pop();
            false
        }
        let mut path = Vec::new();
        go(&self.root, id, &mut path).then_some(path)
    }

    pub fn parent_of(&self, id: NodeId) -> Option<Arc<Node>> {
        let path = self.path_to(id)?;
        (path.len() >= 2).then(|| path[path.len() - 2].clone())
    }

    pub(crate) fn alloc(&mut self, shape: &Shape) -> Arc<Node> {
        build(shape, &mut self.next_id)
    }

    pub(crate) fn fresh_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Replaces the node `target` using `f`, copying only the path above it.
    pub(crate) fn replace(&self, target: NodeId, f: impl FnOnce(&Arc<Node>) -> Arc<Node>) -> ProcessTree {
        fn go(n: &Arc<Node>, target: NodeId, f: &mut Option<Box<dyn FnOnce(&Arc<Node>) -> Arc<Node> + '_>>) -> Arc<Node> {
            if n.id == target {
                let f = f.take().expect("target visited once");
                return f(n);
            }
            match &n.kind {
                NodeKind::Operator(op, ch) if n.contains(target) => Arc::new(Node {
                    id: n.id,
                    kind: NodeKind::Operator(*op, ch.iter().map(|c| go(c, target, f)).collect()),
                }),
                _ => n.clone(),
            }
        }
        let mut f: Option<Box<dyn FnOnce(&Arc<Node>) -> Arc<Node> + '_>> = Some(Box::new(f));
        ProcessTree { root: go(&self.root, target, &mut f), next_id: self.next_id }
    }

    pub(crate) fn with_root(&self, root: Arc<Node>, next_id: u64) -> ProcessTree {
        ProcessTree { root, next_id }
    }

    pub(crate) fn next_id(&self) -> u64 {
        self.next_id
    }
}

impl fmt::Display for ProcessTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&notation::print(&self.root))
    }
}

pub const LOOP_EXIT: &str = "exit";
pub const LOOP_REDO: &str = "redo";

/// A choice in the model whose outcome is predicted by a branching model.
/// For xor nodes the classes are child positions; for loops 0 = exit and
/// 1 = redo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub id: NodeId,
    pub kind: Operator,
    pub labels: Vec<String>,
}

fn build(shape: &Shape, next_id: &mut u64) -> Arc<Node> {
    let id = NodeId(*next_id);
    *next_id += 1;
    let kind = match shape {
        Shape::Activity(a) => NodeKind::Activity(a.clone()),
        Shape::Tau => NodeKind::Tau,
        Shape::Op(op, ch) => NodeKind::Operator(*op, ch.iter().map(|c| build(c, next_id)).collect()),
    };
    Arc::new(Node { id, kind })
}

fn to_shape(n: &Node) -> Shape {
    match &n.kind {
        NodeKind::Activity(a) => Shape::Activity(a.clone()),
        NodeKind::Tau => Shape::Tau,
        NodeKind::Operator(op, ch) => Shape::Op(*op, ch.iter().map(|c| to_shape(c)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_rules() {
        let s = Shape::seq(vec![Shape::act("a"), Shape::seq(vec![Shape::act("b"), Shape::act("c")])]).normalize();
        assert_eq!(s, Shape::seq(vec![Shape::act("a"), Shape::act("b"), Shape::act("c")]));
        let l = Shape::Op(Operator::Loop, vec![Shape::act("a"), Shape::act("b"), Shape::act("c")]).normalize();
        assert_eq!(l, Shape::looped(Shape::act("a"), Shape::xor(vec![Shape::act("b"), Shape::act("c")])));
        assert_eq!(Shape::xor(vec![Shape::act("a")]).normalize(), Shape::act("a"));
    }

    #[test]
    fn ids_are_preorder_and_stable_under_replace() {
        let t = ProcessTree::parse("→(a, ×(b, c))").unwrap();
        let ids: Vec<u64> = t.nodes().iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        let b = t.nodes()[3].id;
        let mut t2 = t.clone();
        let fresh = t2.alloc(&Shape::Tau);
        let t3 = t2.replace(b, |old| {
            Arc::new(Node { id: NodeId(99), kind: NodeKind::Operator(Operator::Xor, vec![old.clone(), fresh]) })
        });
        assert_eq!(t3.to_string(), "→(a, ×(×(b, τ), c))");
        assert!(t3.find(b).is_some());
        assert!(Arc::ptr_eq(&t.root().children()[0], &t3.root().children()[0]));
    }

    #[test]
    fn decision_points_of_sequence_and_loan_model() {
        assert!(ProcessTree::parse("→(a, b)").unwrap().decision_points().is_empty());
        let t = ProcessTree::parse("→(request, ×(manual, automated), notify)").unwrap();
        let dps = t.decision_points();
        assert_eq!(dps.len(), 1);
        assert_eq!(dps[0].labels, vec!["manual", "automated"]);
        let l = ProcessTree::parse("⟲(a, b)").unwrap().decision_points();
        assert_eq!(l[0].labels, vec![LOOP_EXIT, LOOP_REDO]);
    }
}
