use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::stream::AttrValue;

pub const RESERVOIR_CAP: usize = 10_000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform reservoir sample. Replacement slots come from a hash of the
/// arrival index so that identical inputs give identical reservoirs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    cap: usize,
    seen: u64,
    values: Vec<f64>,
}

impl Default for Reservoir {
    fn default() -> Self {
        Reservoir::with_capacity(RESERVOIR_CAP)
    }
}

impl Reservoir {
    pub fn with_capacity(cap: usize) -> Self {
        assert!(cap > 0);
        Reservoir { cap, seen: 0, values: Vec::new() }
    }

    pub fn push(&mut self, x: f64) {
        let i = self.seen;
        self.seen += 1;
        if self.values.len() < self.cap {
            self.values.push(x);
            return;
        }
        let j = splitmix64(i) % (i + 1);
        if (j as usize) < self.cap {
            self.values[j as usize] = x;
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values[rng.random_range(0..self.values.len())])
    }
}

/// Distribution of one event attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AttributeModel {
    Categorical { counts: BTreeMap<String, u64> },
    Numeric { reservoir: Reservoir },
}

impl AttributeModel {
    fn new_for(value: &AttrValue) -> Self {
        match value {
            AttrValue::Numeric(_) => AttributeModel::Numeric { reservoir: Reservoir::default() },
            AttrValue::Categorical(_) => AttributeModel::Categorical { counts: BTreeMap::new() },
        }
    }

    /// Adds an observation. A numeric model seeing a category turns
    /// categorical, keeping its numbers as category labels.
    pub fn observe(&mut self, value: &AttrValue) {
        match (&mut *self, value) {
            (AttributeModel::Numeric { reservoir }, AttrValue::Numeric(x)) => reservoir.push(*x),
            (AttributeModel::Categorical { counts }, v) => *counts.entry(v.to_string()).or_default() += 1,
            (AttributeModel::Numeric { reservoir }, v) => {
                let mut counts = BTreeMap::new();
                for x in reservoir.values() {
                    *counts.entry(AttrValue::Numeric(*x).to_string()).or_default() += 1;
                }
                *counts.entry(v.to_string()).or_default() += 1;
                *self = AttributeModel::Categorical { counts };
            }
        }
    }

    /// Category probabilities; empty for numeric models.
    pub fn probabilities(&self) -> BTreeMap<String, f64> {
        match self {
            AttributeModel::Categorical { counts } => {
                let total: u64 = counts.values().sum();
                counts.iter().map(|(k, &c)| (k.clone(), c as f64 / total as f64)).collect()
            }
            AttributeModel::Numeric { .. } => BTreeMap::new(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Option<AttrValue> {
        match self {
            AttributeModel::Numeric { reservoir } => reservoir.sample(rng).map(AttrValue::Numeric),
            AttributeModel::Categorical { counts } => {
                let total: u64 = counts.values().sum();
                if total == 0 {
                    return None;
                }
                let mut r = rng.random_range(0..total);
                for (k, &c) in counts {
                    if r < c {
                        return Some(AttrValue::Categorical(k.clone()));
                    }
                    r -= c;
                }
                None
            }
        }
    }
}

/// Attribute models keyed by activity, then attribute name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeModels {
    pub by_activity: BTreeMap<String, BTreeMap<String, AttributeModel>>,
}

impl AttributeModels {
    pub fn observe(&mut self, activity: &str, attributes: &BTreeMap<String, AttrValue>) {
        if attributes.is_empty() {
            return;
        }
        let models = self.by_activity.entry(activity.to_string()).or_default();
        for (name, value) in attributes {
            models.entry(name.clone()).or_insert_with(|| AttributeModel::new_for(value)).observe(value);
        }
    }
}

/// Draws one value per attribute known for `activity`.
pub fn sample_attributes(models: &AttributeModels, activity: &str, rng: &mut impl Rng) -> BTreeMap<String, AttrValue> {
    models
        .by_activity
        .get(activity)
        .into_iter()
        .flatten()
        .filter_map(|(name, m)| m.sample(rng).map(|v| (name.clone(), v)))
        .collect()
}
