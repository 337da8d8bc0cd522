//! Online learning core: Hoeffding bound, ADWIN, Hoeffding Adaptive Trees
//! and the registry of predictive models.

mod adwin;
mod features;
mod hat;
mod hoeffding;
mod instances;
mod predictive;

pub use adwin::{Adwin, MAX_BUCKETS};
pub use features::{
    arrival_features, branching_features, duration_features, waiting_features, Feature, FeatureKind, FeatureVector, Schema,
};
pub use hat::{entropy, fit_batch, Hat, HatStats, Moments, SplitTest, Target, Task, LEAF_BUFFER, LEAF_RESERVOIR, MIN_SAMPLES_LEAF, SKETCH_KEYS};
pub use hoeffding::{hoeffding_epsilon, HoeffdingBoundParams};
pub use instances::{build_training_instances, TrainingInstances};
pub use predictive::{update_predictive_set, PredictiveSet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("target type does not match the tree's task")]
    TargetTypeMismatch,
    #[error("feature vector of length {got} does not fit schema {expected:?}")]
    SchemaMismatch { expected: Vec<String>, got: usize },
    #[error("target must be finite")]
    NonFiniteTarget,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}
