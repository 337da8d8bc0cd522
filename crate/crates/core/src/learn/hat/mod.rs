//! Hoeffding Adaptive Trees with probabilistic leaves.
//!
//! Split nodes monitor the error of their subtree with ADWIN and grow an
//! alternate subtree once that error rises; the alternate takes over when
//! its windowed error is significantly lower. Leaves additionally watch
//! their own target distribution and restart from the retained window when
//! it shifts, so that sampling follows recent behavior.

mod batch;
mod observer;

pub use batch::{fit_batch, MIN_SAMPLES_LEAF};
pub use observer::{entropy, Moments, Test as SplitTest, SKETCH_KEYS};

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adwin::Adwin;
use super::features::{Feature, FeatureVector, Schema};
use super::hoeffding::{epsilon, HoeffdingBoundParams};
use super::LearnError;
use crate::descriptive::Reservoir;
use observer::{Candidate, Observer};

/// Target values kept per regression leaf.
pub const LEAF_RESERVOIR: usize = 1_000;
/// Recent instances buffered per leaf.
pub const LEAF_BUFFER: usize = 1_024;
/// Window widths both detectors need before an alternate is judged.
const SWITCH_WIDTH: u64 = 300;
const SWITCH_DELTA: f64 = 0.05;
/// Below this many values a regression leaf samples from a normal fit.
const RESERVOIR_MIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Value(f64),
}

/// Structural events since construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HatStats {
    pub splits: u64,
    pub alternates_created: u64,
    pub switches: u64,
    pub prunes: u64,
    pub leaf_resets: u64,
}

/// Running target range for error normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Range {
    min: f64,
    max: f64,
}

impl Default for Range {
    fn default() -> Self {
        Range { min: f64::MAX, max: f64::MIN }
    }
}

impl Range {
    fn observe(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn width(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            0.0
        }
    }

    fn norm(&self, v: f64) -> f64 {
        let w = self.width();
        if w == 0.0 {
            0.0
        } else {
            ((v - self.min) / w).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Leaf {
    weight: f64,
    since_eval: u64,
    classes: Vec<f64>,
    moments: Moments,
    reservoir: Reservoir,
    observers: Vec<Option<Observer>>,
    recent: VecDeque<(FeatureVector, Target)>,
    drift: Vec<Adwin>,
}

impl Leaf {
    fn new(n_features: usize) -> Self {
        Leaf {
            weight: 0.0,
            since_eval: 0,
            classes: Vec::new(),
            moments: Moments::default(),
            reservoir: Reservoir::with_capacity(LEAF_RESERVOIR),
            observers: vec![None; n_features],
            recent: VecDeque::new(),
            drift: Vec::new(),
        }
    }

    /// Adds one instance. With `watch`, feeds the distribution detectors and
    /// returns the retained width when one of them cut.
    fn absorb(&mut self, x: &[Feature], y: Target, watch: Option<(&Range, f64)>) -> Option<u64> {
        self.weight += 1.0;
        self.since_eval += 1;
        match y {
            Target::Class(c) => {
                if self.classes.len() <= c {
                    self.classes.resize(c + 1, 0.0);
                }
                self.classes[c] += 1.0;
                for (f, o) in x.iter().zip(self.observers.iter_mut()) {
                    o.get_or_insert_with(|| Observer::for_class(f)).observe_class(f, c);
                }
            }
            Target::Value(v) => {
                self.moments.push(v);
                self.reservoir.push(v);
                for (f, o) in x.iter().zip(self.observers.iter_mut()) {
                    o.get_or_insert_with(|| Observer::for_value(f)).observe_value(f, v);
                }
            }
        }
        self.recent.push_back((x.to_vec(), y));
        if self.recent.len() > LEAF_BUFFER {
            self.recent.pop_front();
        }
        let (range, adwin_delta) = watch?;
        let mut cut: Option<u64> = None;
        let mut note = |a: &Adwin, fired: bool| {
            if fired {
                cut = Some(cut.map_or(a.width(), |w| w.min(a.width())));
            }
        };
        match y {
            Target::Class(c) => {
                while self.drift.len() < self.classes.len() {
                    self.drift.push(Adwin::new(adwin_delta));
                }
                for (k, a) in self.drift.iter_mut().enumerate() {
                    let fired = a.update(if k == c { 1.0 } else { 0.0 });
                    note(a, fired);
                }
            }
            Target::Value(v) => {
                if self.drift.is_empty() {
                    self.drift.push(Adwin::new(adwin_delta));
                }
                let fired = self.drift[0].update(range.norm(v));
                note(&self.drift[0], fired);
            }
        }
        cut
    }

    /// A fresh leaf holding the newest `keep` buffered instances.
    fn restarted(&self, keep: u64, range: &Range, adwin_delta: f64) -> Leaf {
        let mut leaf = Leaf::new(self.observers.len());
        let skip = self.recent.len().saturating_sub(keep as usize);
        for (x, y) in self.recent.iter().skip(skip) {
            leaf.absorb(x, *y, Some((range, adwin_delta)));
        }
        leaf.since_eval = 0;
        leaf
    }

    fn majority(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in self.classes.iter().enumerate() {
            if c > 0.0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best.map(|(i, _)| i)
    }

    fn best_split(&self, task: Task, p: &HoeffdingBoundParams) -> Option<SplitTest> {
        let (range, mut cands): (f64, Vec<Candidate>) = match task {
            Task::Classification => {
                let range = (self.classes.iter().filter(|&&c| c > 0.0).count().max(2) as f64).log2();
                let c = self
                    .observers
                    .iter()
                    .enumerate()
                    .filter_map(|(i, o)| o.as_ref()?.best_class_split(i, &self.classes))
                    .collect();
                (range, c)
            }
            Task::Regression => {
                let c = self
                    .observers
                    .iter()
                    .enumerate()
                    .filter_map(|(i, o)| o.as_ref()?.best_value_split(i, &self.moments))
                    .collect();
                (1.0, c)
            }
        };
        cands.sort_by(|a, b| b.merit.total_cmp(&a.merit));
        let best = cands.first()?;
        let second = cands.get(1).map_or(0.0, |c| c.merit.max(0.0));
        let eps = epsilon(range, p.delta, self.weight as u64);
        (best.merit > 0.0 && (best.merit - second > eps || eps < p.tie_threshold)).then(|| best.test.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Body {
    Leaf(Box<Leaf>),
    Split { test: SplitTest, children: Vec<HatNode> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HatNode {
    depth: usize,
    error: Adwin,
    body: Body,
    alt: Option<Box<HatNode>>,
}

struct Ctx<'a> {
    params: &'a HoeffdingBoundParams,
    task: Task,
    range: &'a Range,
    stats: &'a mut HatStats,
}

impl HatNode {
    fn leaf(depth: usize, leaf: Leaf, adwin_delta: f64) -> Self {
        HatNode { depth, error: Adwin::new(adwin_delta), body: Body::Leaf(Box::new(leaf)), alt: None }
    }

    fn leaf_for(&self, x: &[Feature]) -> &Leaf {
        match &self.body {
            Body::Leaf(l) => l,
            Body::Split { test, children } => children[usize::from(!test.goes_left(x))].leaf_for(x),
        }
    }

    fn loss(&self, x: &[Feature], y: Target, range: &Range) -> f64 {
        let leaf = self.leaf_for(x);
        match y {
            Target::Class(c) => f64::from(u8::from(leaf.majority() != Some(c))),
            Target::Value(v) => {
                if leaf.moments.n == 0.0 || range.width() == 0.0 {
                    return if leaf.moments.n == 0.0 { 1.0 } else { 0.0 };
                }
                ((v - leaf.moments.mean).abs() / range.width()).min(1.0)
            }
        }
    }

    fn learn(&mut self, x: &[Feature], y: Target, ctx: &mut Ctx<'_>) {
        let err = self.loss(x, y, ctx.range);
        let watch = ctx.params.drift_detection;
        let adwin_delta = ctx.params.adwin_delta;
        let HatNode { depth, error, body, alt } = self;
        match body {
            Body::Leaf(leaf) => {
                error.update(err);
                if let Some(keep) = leaf.absorb(x, y, watch.then_some((ctx.range, adwin_delta))) {
                    **leaf = leaf.restarted(keep, ctx.range, adwin_delta);
                    ctx.stats.leaf_resets += 1;
                }
                if leaf.since_eval >= ctx.params.grace_period && *depth < ctx.params.max_depth {
                    leaf.since_eval = 0;
                    if let Some(test) = leaf.best_split(ctx.task, ctx.params) {
                        let n = leaf.observers.len();
                        let mut sides = [Leaf::new(n), Leaf::new(n)];
                        for (xi, yi) in &leaf.recent {
                            let side = usize::from(!test.goes_left(xi));
                            sides[side].absorb(xi, *yi, watch.then_some((ctx.range, adwin_delta)));
                        }
                        let children = sides
                            .into_iter()
                            .map(|mut l| {
                                l.since_eval = 0;
                                HatNode::leaf(*depth + 1, l, adwin_delta)
                            })
                            .collect();
                        *body = Body::Split { test, children };
                        ctx.stats.splits += 1;
                    }
                }
            }
            Body::Split { test, children } => {
                let before = error.mean();
                let cut = error.update(err);
                if watch && cut && error.mean() > before && alt.is_none() {
                    *alt = Some(Box::new(HatNode::leaf(*depth, Leaf::new(x.len()), adwin_delta)));
                    ctx.stats.alternates_created += 1;
                }
                if let Some(a) = alt {
                    a.learn(x, y, ctx);
                }
                let side = usize::from(!test.goes_left(x));
                children[side].learn(x, y, ctx);
                self.judge_alternate(ctx.stats);
            }
        }
    }

    fn judge_alternate(&mut self, stats: &mut HatStats) {
        let Some(a) = &self.alt else { return };
        let (wa, wo) = (a.error.width(), self.error.width());
        if wa <= SWITCH_WIDTH || wo <= SWITCH_WIDTH {
            return;
        }
        let (old, new) = (self.error.mean(), a.error.mean());
        let f_n = 1.0 / wa as f64 + 1.0 / wo as f64;
        let bound = (2.0 * old * (1.0 - old) * (2.0 / SWITCH_DELTA).ln() * f_n).sqrt();
        if bound < old - new {
            let a = self.alt.take().expect("checked above");
            *self = *a;
            stats.switches += 1;
        } else if bound < new - old {
            self.alt = None;
            stats.prunes += 1;
        }
    }

    fn depth_below(&self) -> usize {
        let own = match &self.body {
            Body::Leaf(_) => self.depth,
            Body::Split { children, .. } => children.iter().map(HatNode::depth_below).max().unwrap_or(self.depth),
        };
        own.max(self.alt.as_ref().map_or(0, |a| a.depth_below()))
    }

    fn count(&self, leaves: &mut usize, splits: &mut usize) {
        match &self.body {
            Body::Leaf(_) => *leaves += 1,
            Body::Split { children, .. } => {
                *splits += 1;
                children.iter().for_each(|c| c.count(leaves, splits));
            }
        }
    }
}

/// A Hoeffding Adaptive Tree over a fixed feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hat {
    task: Task,
    schema: Schema,
    params: HoeffdingBoundParams,
    root: HatNode,
    range: Range,
    seen: u64,
    stats: HatStats,
}

impl Hat {
    pub fn new(task: Task, schema: Schema, params: HoeffdingBoundParams) -> Result<Self, LearnError> {
        params.validate()?;
        let root = HatNode::leaf(0, Leaf::new(schema.len()), params.adwin_delta);
        Ok(Hat { task, schema, params, root, range: Range::default(), seen: 0, stats: HatStats::default() })
    }

    pub fn classifier(schema: Schema, params: HoeffdingBoundParams) -> Result<Self, LearnError> {
        Hat::new(Task::Classification, schema, params)
    }

    pub fn regressor(schema: Schema, params: HoeffdingBoundParams) -> Result<Self, LearnError> {
        Hat::new(Task::Regression, schema, params)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn params(&self) -> &HoeffdingBoundParams {
        &self.params
    }

    pub fn stats(&self) -> &HatStats {
        &self.stats
    }

    /// Instances learned since construction.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    fn check(&self, x: &[Feature], y: Option<Target>) -> Result<(), LearnError> {
        if !self.schema.accepts(x) {
            return Err(LearnError::SchemaMismatch { expected: self.schema.names.clone(), got: x.len() });
        }
        match (self.task, y) {
            (Task::Classification, Some(Target::Value(_))) | (Task::Regression, Some(Target::Class(_))) => {
                Err(LearnError::TargetTypeMismatch)
            }
            (_, Some(Target::Value(v))) if !v.is_finite() => Err(LearnError::NonFiniteTarget),
            _ => Ok(()),
        }
    }

    pub fn learn_one(&mut self, x: &[Feature], y: Target) -> Result<(), LearnError> {
        self.check(x, Some(y))?;
        if let Target::Value(v) = y {
            self.range.observe(v);
        }
        self.seen += 1;
        let mut ctx = Ctx { params: &self.params, task: self.task, range: &self.range, stats: &mut self.stats };
        self.root.learn(x, y, &mut ctx);
        Ok(())
    }

    /// Class weights at the leaf reached by `x`.
    pub fn leaf_counts(&self, x: &[Feature]) -> Vec<f64> {
        self.root.leaf_for(x).classes.clone()
    }

    /// Instances the leaf reached by `x` has absorbed.
    pub fn leaf_weight(&self, x: &[Feature]) -> f64 {
        self.root.leaf_for(x).weight
    }

    /// Target moments at the leaf reached by `x`.
    pub fn leaf_moments(&self, x: &[Feature]) -> Moments {
        self.root.leaf_for(x).moments
    }

    pub fn predict_proba(&self, x: &[Feature]) -> Vec<f64> {
        let c = &self.root.leaf_for(x).classes;
        let total: f64 = c.iter().sum();
        if total == 0.0 {
            return vec![];
        }
        c.iter().map(|v| v / total).collect()
    }

    pub fn predict_class(&self, x: &[Feature]) -> Option<usize> {
        self.root.leaf_for(x).majority()
    }

    pub fn predict_value(&self, x: &[Feature]) -> Option<f64> {
        let m = self.root.leaf_for(x).moments;
        (m.n > 0.0).then_some(m.mean)
    }

    /// Draws a target from the leaf reached by `x`; `None` while that leaf
    /// is empty.
    pub fn sample(&self, x: &[Feature], rng: &mut impl Rng) -> Option<Target> {
        let leaf = self.root.leaf_for(x);
        match self.task {
            Task::Classification => {
                let total: f64 = leaf.classes.iter().sum();
                if total <= 0.0 {
                    return None;
                }
                let mut r = rng.random::<f64>() * total;
                for (i, &c) in leaf.classes.iter().enumerate() {
                    if r < c {
                        return Some(Target::Class(i));
                    }
                    r -= c;
                }
                leaf.majority().map(Target::Class)
            }
            Task::Regression => {
                if leaf.reservoir.len() >= RESERVOIR_MIN {
                    return leaf.reservoir.sample(rng).map(Target::Value);
                }
                let m = leaf.moments;
                if m.n == 0.0 {
                    return None;
                }
                let sd = m.std();
                if sd == 0.0 {
                    return Some(Target::Value(m.mean));
                }
                let normal = Normal::new(m.mean, sd).expect("finite moments");
                Some(Target::Value(normal.sample(rng)))
            }
        }
    }

    pub fn sample_class(&self, x: &[Feature], rng: &mut impl Rng) -> Option<usize> {
        match self.sample(x, rng)? {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }

    pub fn sample_value(&self, x: &[Feature], rng: &mut impl Rng) -> Option<f64> {
        match self.sample(x, rng)? {
            Target::Value(v) => Some(v),
            Target::Class(_) => None,
        }
    }

    /// Deepest node, alternates included; the root has depth 0.
    pub fn depth(&self) -> usize {
        self.root.depth_below()
    }

    pub fn n_leaves(&self) -> usize {
        let (mut l, mut s) = (0, 0);
        self.root.count(&mut l, &mut s);
        l
    }

    pub fn n_splits(&self) -> usize {
        let (mut l, mut s) = (0, 0);
        self.root.count(&mut l, &mut s);
        s
    }

    pub fn has_alternate(&self) -> bool {
        fn any(n: &HatNode) -> bool {
            n.alt.is_some()
                || match &n.body {
                    Body::Leaf(_) => false,
                    Body::Split { children, .. } => children.iter().any(any),
                }
        }
        any(&self.root)
    }

    /// Test at the root, if it has split.
    pub fn root_test(&self) -> Option<&SplitTest> {
        match &self.root.body {
            Body::Split { test, .. } => Some(test),
            Body::Leaf(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::features::FeatureKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_num() -> Schema {
        Schema { names: vec!["x".into()], kinds: vec![FeatureKind::Numeric] }
    }

    fn params(grace: u64) -> HoeffdingBoundParams {
        HoeffdingBoundParams::default().with_grace_period(grace)
    }

    #[test]
    fn grace_gate_keeps_a_single_leaf() {
        let mut t = Hat::classifier(one_num(), params(100)).unwrap();
        for i in 0..99 {
            t.learn_one(&[Feature::Num(i as f64)], Target::Class(usize::from(i >= 50))).unwrap();
        }
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn separating_feature_splits_the_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Hat::classifier(one_num(), params(100)).unwrap();
        for _ in 0..1_000 {
            let x: f64 = rng.random();
            t.learn_one(&[Feature::Num(x)], Target::Class(usize::from(x > 0.5))).unwrap();
        }
        let Some(SplitTest::Le { feature: 0, threshold }) = t.root_test() else { panic!("no root split") };
        assert!((0.3..0.7).contains(threshold), "{threshold}");
        assert!(t.depth() <= 5);
    }

    #[test]
    fn type_mismatch_is_rejected() {
        let mut t = Hat::classifier(one_num(), params(10)).unwrap();
        assert_eq!(t.learn_one(&[Feature::Num(1.0)], Target::Value(1.0)), Err(LearnError::TargetTypeMismatch));
        let mut r = Hat::regressor(one_num(), params(10)).unwrap();
        assert_eq!(r.learn_one(&[Feature::Num(1.0)], Target::Class(0)), Err(LearnError::TargetTypeMismatch));
        assert!(matches!(r.learn_one(&[Feature::Cat("a".into())], Target::Value(1.0)), Err(LearnError::SchemaMismatch { .. })));
    }

    #[test]
    fn class_sampling_follows_the_leaf_table() {
        let mut t = Hat::classifier(one_num(), params(100_000)).unwrap();
        for i in 0..1_000 {
            t.learn_one(&[Feature::Num(0.0)], Target::Class(usize::from(i % 5 != 0))).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let ones = (0..n).filter(|_| t.sample_class(&[Feature::Num(0.0)], &mut rng) == Some(1)).count();
        let sd = (n as f64 * 0.8 * 0.2).sqrt();
        assert!((ones as f64 - 8_000.0).abs() < 4.0 * sd, "{ones}");
    }

    #[test]
    fn regression_sampling() {
        let mut t = Hat::regressor(one_num(), params(100)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(t.sample_value(&[Feature::Num(0.0)], &mut rng), None);
        t.learn_one(&[Feature::Num(0.0)], Target::Value(600.0)).unwrap();
        assert_eq!(t.sample_value(&[Feature::Num(0.0)], &mut rng), Some(600.0));
        for v in 1..=20 {
            t.learn_one(&[Feature::Num(0.0)], Target::Value(v as f64)).unwrap();
        }
        for _ in 0..100 {
            let v = t.sample_value(&[Feature::Num(0.0)], &mut rng).unwrap();
            assert!(v == 600.0 || (1.0..=20.0).contains(&v));
        }
    }

    #[test]
    fn leaf_resets_on_a_distribution_shift() {
        let mut t = Hat::classifier(one_num(), params(100_000)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..6_000 {
            let p = if i < 3_000 { 0.5 } else { 0.8 };
            t.learn_one(&[Feature::Num(0.0)], Target::Class(usize::from(rng.random::<f64>() < p))).unwrap();
        }
        assert!(t.stats().leaf_resets >= 1);
        let p = t.predict_proba(&[Feature::Num(0.0)]);
        assert!((0.74..0.86).contains(&p[1]), "{p:?}");
    }

    #[test]
    fn disabled_drift_keeps_the_blend() {
        let mut p = params(100_000);
        p.drift_detection = false;
        let mut t = Hat::classifier(one_num(), p).unwrap();
        for i in 0..6_000 {
            let share = if i < 3_000 { 2 } else { 5 };
            t.learn_one(&[Feature::Num(0.0)], Target::Class(usize::from(i % share != 0))).unwrap();
        }
        assert_eq!(t.stats().leaf_resets, 0);
        assert_eq!(t.leaf_weight(&[Feature::Num(0.0)]), 6_000.0);
    }

    #[test]
    fn json_round_trip() {
        let mut t = Hat::regressor(one_num(), params(50)).unwrap();
        for i in 0..200 {
            t.learn_one(&[Feature::Num(i as f64)], Target::Value((i % 17) as f64)).unwrap();
        }
        let back: Hat = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
