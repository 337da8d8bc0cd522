//! Per-feature sufficient statistics and split candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::learn::features::Feature;

/// Numeric thresholds tried per Gaussian observer.
const GAUSSIAN_CANDIDATES: usize = 10;
/// Keys kept by a regression sketch.
pub const SKETCH_KEYS: usize = 32;
/// Smallest share of the weight either branch must receive.
const MIN_BRANCH_FRACTION: f64 = 0.01;

/// Running count, mean and squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0.0 {
            return *o;
        }
        if o.n == 0.0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    /// `self` minus a subset `o` of its values.
    pub fn remove(&self, o: &Moments) -> Moments {
        let n = self.n - o.n;
        if n <= 0.0 {
            return Moments::default();
        }
        let mean = (self.n * self.mean - o.n * o.mean) / n;
        let d = o.mean - mean;
        Moments { n, mean, m2: (self.m2 - o.m2 - d * d * n * o.n / self.n).max(0.0) }
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.n > 0.0 {
            self.m2 / self.n
        } else {
            0.0
        }
    }

    pub fn std(&self) -> f64 {
        if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).sqrt()
        } else {
            0.0
        }
    }
}

/// Entropy in bits of a weight vector.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -counts.iter().filter(|&&c| c > 0.0).map(|&c| (c / total) * (c / total).log2()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Gaussian {
    m: Moments,
    min: f64,
    max: f64,
}

impl Gaussian {
    fn new() -> Self {
        Gaussian { m: Moments::default(), min: f64::MAX, max: f64::MIN }
    }

    fn push(&mut self, x: f64) {
        self.m.push(x);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Estimated weight at or below `t`.
    fn weight_le(&self, t: f64) -> f64 {
        if self.m.n == 0.0 {
            return 0.0;
        }
        if t < self.min {
            return 0.0;
        }
        if t >= self.max {
            return self.m.n;
        }
        let sd = self.m.std();
        if sd < 1e-12 {
            return if t >= self.m.mean { self.m.n } else { 0.0 };
        }
        let z = (t - self.m.mean) / (sd * std::f64::consts::SQRT_2);
        self.m.n * 0.5 * (1.0 + libm::erf(z))
    }
}

/// Binary split test; instances failing it go right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Test {
    /// `x[feature] <= threshold`
    Le { feature: usize, threshold: f64 },
    /// `x[feature] == value`
    Eq { feature: usize, value: String },
}

impl Test {
    pub fn goes_left(&self, x: &[Feature]) -> bool {
        match self {
            Test::Le { feature, threshold } => x.get(*feature).and_then(Feature::as_num).is_some_and(|v| v <= *threshold),
            Test::Eq { feature, value } => x.get(*feature).and_then(Feature::as_cat).is_some_and(|v| v == value),
        }
    }

    pub fn feature(&self) -> usize {
        match self {
            Test::Le { feature, .. } | Test::Eq { feature, .. } => *feature,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Candidate {
    pub test: Test,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum Observer {
    /// Numeric feature, class target: one Gaussian per class.
    Gaussian(Vec<Gaussian>),
    /// Categorical feature, class target.
    NominalClass(BTreeMap<String, Vec<f64>>),
    /// Numeric feature, numeric target: sorted keys with target moments.
    Sketch(Vec<(f64, Moments)>),
    /// Categorical feature, numeric target.
    NominalValue(BTreeMap<String, Moments>),
}

fn add_class(v: &mut Vec<f64>, class: usize, w: f64) {
    if v.len() <= class {
        v.resize(class + 1, 0.0);
    }
    v[class] += w;
}

fn branch_ok(left: f64, right: f64) -> bool {
    let total = left + right;
    total > 0.0 && left / total >= MIN_BRANCH_FRACTION && right / total >= MIN_BRANCH_FRACTION
}

fn info_gain(parent: &[f64], left: &[f64]) -> Option<f64> {
    let right: Vec<f64> = parent.iter().enumerate().map(|(i, p)| (p - left.get(i).copied().unwrap_or(0.0)).max(0.0)).collect();
    let (wl, wr) = (left.iter().sum::<f64>(), right.iter().sum::<f64>());
    if !branch_ok(wl, wr) {
        return None;
    }
    let total = wl + wr;
    Some(entropy(parent) - (wl / total) * entropy(left) - (wr / total) * entropy(&right))
}

/// Variance reduction relative to the parent variance, in [0, 1].
fn variance_reduction(parent: &Moments, left: &Moments) -> Option<f64> {
    let right = parent.remove(left);
    if !branch_ok(left.n, right.n) || parent.variance() <= 0.0 {
        return None;
    }
    let within = (left.n * left.variance() + right.n * right.variance()) / parent.n;
    Some(((parent.variance() - within) / parent.variance()).clamp(0.0, 1.0))
}

impl Observer {
    pub fn for_class(x: &Feature) -> Self {
        match x {
            Feature::Num(_) => Observer::Gaussian(Vec::new()),
            Feature::Cat(_) => Observer::NominalClass(BTreeMap::new()),
        }
    }

    pub fn for_value(x: &Feature) -> Self {
        match x {
            Feature::Num(_) => Observer::Sketch(Vec::new()),
            Feature::Cat(_) => Observer::NominalValue(BTreeMap::new()),
        }
    }

    pub fn observe_class(&mut self, x: &Feature, class: usize) {
        match (self, x) {
            (Observer::Gaussian(per_class), Feature::Num(v)) => {
                while per_class.len() <= class {
                    per_class.push(Gaussian::new());
                }
                per_class[class].push(*v);
            }
            (Observer::NominalClass(table), Feature::Cat(v)) => add_class(table.entry(v.clone()).or_default(), class, 1.0),
            _ => {}
        }
    }

    pub fn observe_value(&mut self, x: &Feature, y: f64) {
        match (self, x) {
            (Observer::Sketch(keys), Feature::Num(v)) => sketch_insert(keys, *v, y),
            (Observer::NominalValue(table), Feature::Cat(v)) => table.entry(v.clone()).or_default().push(y),
            _ => {}
        }
    }

    /// Best binary split on this feature for a class target.
    pub fn best_class_split(&self, feature: usize, parent: &[f64]) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut offer = |test: Test, merit: Option<f64>| {
            if let Some(m) = merit {
                if best.as_ref().is_none_or(|b| m > b.merit) {
                    best = Some(Candidate { test, merit: m });
                }
            }
        };
        match self {
            Observer::Gaussian(per_class) => {
                let lo = per_class.iter().map(|g| g.min).fold(f64::INFINITY, f64::min);
                let hi = per_class.iter().map(|g| g.max).fold(f64::NEG_INFINITY, f64::max);
                if !(lo < hi) {
                    return None;
                }
                for i in 1..=GAUSSIAN_CANDIDATES {
                    let t = lo + (hi - lo) * i as f64 / (GAUSSIAN_CANDIDATES + 1) as f64;
                    let left: Vec<f64> = per_class.iter().map(|g| g.weight_le(t)).collect();
                    offer(Test::Le { feature, threshold: t }, info_gain(parent, &left));
                }
            }
            Observer::NominalClass(table) => {
                if table.len() < 2 {
                    return None;
                }
                for (v, left) in table {
                    offer(Test::Eq { feature, value: v.clone() }, info_gain(parent, left));
                }
            }
            _ => return None,
        }
        best
    }

    /// Best binary split on this feature for a numeric target.
    pub fn best_value_split(&self, feature: usize, parent: &Moments) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut offer = |test: Test, merit: Option<f64>| {
            if let Some(m) = merit {
                if best.as_ref().is_none_or(|b| m > b.merit) {
                    best = Some(Candidate { test, merit: m });
                }
            }
        };
        match self {
            Observer::Sketch(keys) => {
                let mut prefix = Moments::default();
                for w in keys.windows(2) {
                    prefix = prefix.merge(&w[0].1);
                    let t = (w[0].0 + w[1].0) / 2.0;
                    offer(Test::Le { feature, threshold: t }, variance_reduction(parent, &prefix));
                }
            }
            Observer::NominalValue(table) => {
                if table.len() < 2 {
                    return None;
                }
                for (v, left) in table {
                    offer(Test::Eq { feature, value: v.clone() }, variance_reduction(parent, left));
                }
            }
            _ => return None,
        }
        best
    }
}

/// Adds `(x, y)` to a sorted key list, merging the two closest keys once
/// more than [`SKETCH_KEYS`] would exist.
fn sketch_insert(keys: &mut Vec<(f64, Moments)>, x: f64, y: f64) {
    match keys.binary_search_by(|(k, _)| k.total_cmp(&x)) {
        Ok(i) => keys[i].1.push(y),
        Err(i) => {
            let mut m = Moments::default();
            m.push(y);
            keys.insert(i, (x, m));
            if keys.len() > SKETCH_KEYS {
                let j = (0..keys.len() - 1)
                    .min_by(|&a, &b| (keys[a + 1].0 - keys[a].0).total_cmp(&(keys[b + 1].0 - keys[b].0)))
                    .expect("at least two keys");
                let (ka, ma) = keys[j];
                let (kb, mb) = keys.remove(j + 1);
                let merged = ma.merge(&mb);
                keys[j] = ((ka * ma.n + kb * mb.n) / merged.n, merged);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_and_remove() {
        let xs = [1.0, 4.0, 4.0, 9.0, 2.5];
        let mut all = Moments::default();
        let (mut a, mut b) = (Moments::default(), Moments::default());
        for (i, x) in xs.iter().enumerate() {
            all.push(*x);
            if i < 2 { a.push(*x) } else { b.push(*x) }
        }
        let m = a.merge(&b);
        assert!((m.mean - all.mean).abs() < 1e-12 && (m.m2 - all.m2).abs() < 1e-9);
        let r = all.remove(&a);
        assert!((r.mean - b.mean).abs() < 1e-12 && (r.m2 - b.m2).abs() < 1e-9);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[5.0, 5.0]), 1.0);
        assert_eq!(entropy(&[3.0, 0.0]), 0.0);
        assert!((entropy(&[1.0, 1.0, 1.0, 1.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn separated_classes_give_full_gain() {
        let mut o = Observer::Gaussian(Vec::new());
        for i in 0..100 {
            o.observe_class(&Feature::Num(i as f64 / 100.0), 0);
            o.observe_class(&Feature::Num(5.0 + i as f64 / 100.0), 1);
        }
        let c = o.best_class_split(0, &[100.0, 100.0]).unwrap();
        assert!(c.merit > 0.99, "{c:?}");
        let Test::Le { threshold, .. } = c.test else { panic!() };
        assert!((0.99..5.0).contains(&threshold));
    }

    #[test]
    fn sketch_is_capped_and_conserves_weight() {
        let mut o = Observer::Sketch(Vec::new());
        let mut total = Moments::default();
        for i in 0..1_000 {
            let x = ((i * 7919) % 1000) as f64;
            o.observe_value(&Feature::Num(x), x * 2.0);
            total.push(x * 2.0);
        }
        let Observer::Sketch(keys) = &o else { panic!() };
        assert!(keys.len() <= SKETCH_KEYS);
        assert!(keys.windows(2).all(|w| w[0].0 < w[1].0));
        let n: f64 = keys.iter().map(|k| k.1.n).sum();
        assert_eq!(n, 1_000.0);
        let c = o.best_value_split(0, &total).unwrap();
        assert!(c.merit > 0.6, "{c:?}");
    }

    #[test]
    fn nominal_split_isolates_a_value() {
        let mut o = Observer::NominalValue(BTreeMap::new());
        let mut parent = Moments::default();
        for i in 0..60 {
            let (v, y) = match i % 3 {
                0 => ("a", 100.0),
                1 => ("b", 1.0),
                _ => ("c", 1.5),
            };
            o.observe_value(&Feature::Cat(v.into()), y);
            parent.push(y);
        }
        let c = o.best_value_split(0, &parent).unwrap();
        assert_eq!(c.test, Test::Eq { feature: 0, value: "a".into() });
        assert!(!c.test.goes_left(&[Feature::Cat("zzz".into())]));
        assert!(!c.test.goes_left(&[Feature::Num(1.0)]));
    }
}
