//! Depth-limited greedy induction over a full batch, producing a tree with
//! the same node layout as the online learner.

use std::collections::BTreeMap;

use super::observer::{entropy, Moments, Test};
use super::{Body, Hat, HatNode, Leaf, Range, Target, Task};
use crate::learn::features::{Feature, FeatureVector, Schema};
use crate::learn::hoeffding::HoeffdingBoundParams;
use crate::learn::LearnError;

pub const MIN_SAMPLES_LEAF: usize = 10;
/// Smallest impurity decrease, relative to the parent, worth a split.
const MIN_RELATIVE_GAIN: f64 = 0.01;

enum Stat {
    Class(Vec<f64>),
    Value(Moments),
}

impl Stat {
    fn empty(task: Task) -> Self {
        match task {
            Task::Classification => Stat::Class(Vec::new()),
            Task::Regression => Stat::Value(Moments::default()),
        }
    }

    fn add(&mut self, y: Target) {
        match (self, y) {
            (Stat::Class(c), Target::Class(k)) => {
                if c.len() <= k {
                    c.resize(k + 1, 0.0);
                }
                c[k] += 1.0;
            }
            (Stat::Value(m), Target::Value(v)) => m.push(v),
            _ => unreachable!("targets are checked before induction"),
        }
    }

    fn impurity(&self) -> f64 {
        match self {
            Stat::Class(c) => entropy(c),
            Stat::Value(m) => m.variance(),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            Stat::Class(c) => c.iter().sum(),
            Stat::Value(m) => m.n,
        }
    }

    fn minus(&self, o: &Stat) -> Stat {
        match (self, o) {
            (Stat::Class(a), Stat::Class(b)) => {
                Stat::Class(a.iter().enumerate().map(|(i, v)| v - b.get(i).copied().unwrap_or(0.0)).collect())
            }
            (Stat::Value(a), Stat::Value(b)) => Stat::Value(a.remove(b)),
            _ => unreachable!(),
        }
    }
}

fn relative_gain(parent: &Stat, left: &Stat) -> Option<f64> {
    let right = parent.minus(left);
    let (wl, wr) = (left.weight(), right.weight());
    if wl < MIN_SAMPLES_LEAF as f64 || wr < MIN_SAMPLES_LEAF as f64 {
        return None;
    }
    let p = parent.impurity();
    if p <= 0.0 {
        return None;
    }
    let within = (wl * left.impurity() + wr * right.impurity()) / (wl + wr);
    Some((p - within) / p)
}

fn best_split(data: &[(FeatureVector, Target)], idx: &[usize], task: Task, n_features: usize) -> Option<(Test, f64)> {
    let mut parent = Stat::empty(task);
    idx.iter().for_each(|&i| parent.add(data[i].1));
    let mut best: Option<(Test, f64)> = None;
    let mut offer = |test: Test, gain: Option<f64>| {
        if let Some(g) = gain {
            if best.as_ref().is_none_or(|(_, b)| g > *b) {
                best = Some((test, g));
            }
        }
    };
    for f in 0..n_features {
        let mut nums: Vec<(f64, usize)> = Vec::new();
        let mut cats: BTreeMap<&str, Stat> = BTreeMap::new();
        for &i in idx {
            match &data[i].0[f] {
                Feature::Num(v) => nums.push((*v, i)),
                Feature::Cat(v) => cats.entry(v.as_str()).or_insert_with(|| Stat::empty(task)).add(data[i].1),
            }
        }
        if cats.len() >= 2 {
            for (v, left) in &cats {
                offer(Test::Eq { feature: f, value: v.to_string() }, relative_gain(&parent, left));
            }
        }
        if nums.len() >= 2 * MIN_SAMPLES_LEAF {
            nums.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = Stat::empty(task);
            for b in 1..nums.len() {
                left.add(data[nums[b - 1].1].1);
                if nums[b].0 > nums[b - 1].0 {
                    let t = (nums[b - 1].0 + nums[b].0) / 2.0;
                    offer(Test::Le { feature: f, threshold: t }, relative_gain(&parent, &left));
                }
            }
        }
    }
    best
}

fn build(data: &[(FeatureVector, Target)], idx: Vec<usize>, depth: usize, task: Task, p: &HoeffdingBoundParams, n_features: usize, splits: &mut u64) -> HatNode {
    if depth < p.max_depth && idx.len() >= 2 * MIN_SAMPLES_LEAF {
        if let Some((test, gain)) = best_split(data, &idx, task, n_features) {
            if gain >= MIN_RELATIVE_GAIN {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| test.goes_left(&data[i].0));
                *splits += 1;
                let children = vec![
                    build(data, l, depth + 1, task, p, n_features, splits),
                    build(data, r, depth + 1, task, p, n_features, splits),
                ];
                return HatNode { depth, error: crate::learn::Adwin::new(p.adwin_delta), body: Body::Split { test, children }, alt: None };
            }
        }
    }
    let mut leaf = Leaf::new(n_features);
    for &i in &idx {
        leaf.absorb(&data[i].0, data[i].1, None);
    }
    leaf.since_eval = 0;
    HatNode::leaf(depth, leaf, p.adwin_delta)
}

/// Fits a tree on a whole batch with exact greedy splits (entropy or
/// variance), at most `params.max_depth` levels and at least
/// [`MIN_SAMPLES_LEAF`] instances per leaf. The result keeps learning
/// online like any other tree.
pub fn fit_batch(task: Task, schema: Schema, params: HoeffdingBoundParams, data: &[(FeatureVector, Target)]) -> Result<Hat, LearnError> {
    let mut hat = Hat::new(task, schema, params)?;
    for (x, y) in data {
        hat.check(x, Some(*y))?;
    }
    let mut range = Range::default();
    for (_, y) in data {
        if let Target::Value(v) = y {
            range.observe(*v);
        }
    }
    let n_features = hat.schema.len();
    let mut splits = 0;
    hat.root = build(data, (0..data.len()).collect(), 0, task, &params, n_features, &mut splits);
    hat.range = range;
    hat.seen = data.len() as u64;
    hat.stats.splits = splits;
    Ok(hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::features::FeatureKind;

    #[test]
    fn recovers_a_step_function() {
        let schema = Schema { names: vec!["x".into(), "c".into()], kinds: vec![FeatureKind::Numeric, FeatureKind::Categorical] };
        let data: Vec<(FeatureVector, Target)> = (0..400)
            .map(|i| {
                let x = i as f64;
                let c = if i % 2 == 0 { "even" } else { "odd" };
                (vec![Feature::Num(x), Feature::Cat(c.into())], Target::Value(if x < 100.0 { 5.0 } else { 50.0 }))
            })
            .collect();
        let t = fit_batch(Task::Regression, schema, HoeffdingBoundParams::default(), &data).unwrap();
        assert_eq!(t.root_test(), Some(&Test::Le { feature: 0, threshold: 99.5 }));
        assert_eq!(t.predict_value(&[Feature::Num(3.0), Feature::Cat("odd".into())]), Some(5.0));
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn pure_or_small_batches_stay_leaves() {
        let schema = Schema { names: vec!["x".into()], kinds: vec![FeatureKind::Numeric] };
        let data: Vec<(FeatureVector, Target)> = (0..15).map(|i| (vec![Feature::Num(i as f64)], Target::Class(i % 2))).collect();
        let t = fit_batch(Task::Classification, schema, HoeffdingBoundParams::default(), &data).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.leaf_weight(&[Feature::Num(0.0)]), 15.0);
    }
}
