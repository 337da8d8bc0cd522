use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stream::{day_of_week, hour_of_week};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Feature {
    Num(f64),
    Cat(String),
}

impl Feature {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Feature::Num(_) => FeatureKind::Numeric,
            Feature::Cat(_) => FeatureKind::Categorical,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Feature::Num(x) => Some(*x),
            Feature::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Feature::Cat(s) => Some(s),
            Feature::Num(_) => None,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Num(x) => write!(f, "{x}"),
            Feature::Cat(s) => write!(f, "{s}"),
        }
    }
}

/// Ordered, named feature layout of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
}

impl Schema {
    fn of(fields: &[(&str, FeatureKind)]) -> Self {
        Schema {
            names: fields.iter().map(|(n, _)| n.to_string()).collect(),
            kinds: fields.iter().map(|(_, k)| *k).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn duration() -> Self {
        use FeatureKind::*;
        Schema::of(&[("resource", Categorical), ("hour_of_week", Numeric), ("elapsed", Numeric)])
    }

    pub fn waiting() -> Self {
        use FeatureKind::*;
        Schema::of(&[("activity", Categorical), ("hour_of_week", Numeric)])
    }

    pub fn arrival() -> Self {
        use FeatureKind::*;
        Schema::of(&[("hour_of_week", Numeric), ("day_of_week", Numeric)])
    }

    pub fn branching() -> Self {
        use FeatureKind::*;
        Schema::of(&[
            ("previous_activity", Categorical),
            ("previous_resource", Categorical),
            ("hour_of_week", Numeric),
            ("elapsed", Numeric),
        ])
    }

    /// True when `x` has this schema's length and kinds.
    pub fn accepts(&self, x: &[Feature]) -> bool {
        x.len() == self.kinds.len() && x.iter().zip(&self.kinds).all(|(f, k)| f.kind() == *k)
    }
}

pub type FeatureVector = Vec<Feature>;

/// Features of an activity execution starting at `start`, `elapsed` seconds
/// into its case.
pub fn duration_features(resource: &str, start: i64, elapsed: i64) -> FeatureVector {
    vec![Feature::Cat(resource.to_string()), Feature::Num(hour_of_week(start) as f64), Feature::Num(elapsed as f64)]
}

/// Features of a resource queueing `activity` enabled at `enabled`.
pub fn waiting_features(activity: &str, enabled: i64) -> FeatureVector {
    vec![Feature::Cat(activity.to_string()), Feature::Num(hour_of_week(enabled) as f64)]
}

/// Features of the gap following a case arrival at `previous_arrival`.
pub fn arrival_features(previous_arrival: i64) -> FeatureVector {
    vec![Feature::Num(hour_of_week(previous_arrival) as f64), Feature::Num(day_of_week(previous_arrival) as f64)]
}

/// Features of a choice made at `at` after `previous_activity`; empty names
/// mark the case start.
pub fn branching_features(previous_activity: &str, previous_resource: &str, at: i64, elapsed: i64) -> FeatureVector {
    vec![
        Feature::Cat(previous_activity.to_string()),
        Feature::Cat(previous_resource.to_string()),
        Feature::Num(hour_of_week(at) as f64),
        Feature::Num(elapsed as f64),
    ]
}
