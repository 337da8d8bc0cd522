//! Discrete-event simulation of a BPS model.
//!
//! Cases arrive according to the arrival model, walk the process tree with
//! branching drawn from the branching models, and queue for resources whose
//! calendars gate start times. One run is single-threaded; replications run
//! in parallel with seeds `seed ^ k`.

mod engine;

pub use engine::{replicate, schedule_activity, simulate, traverse, EventCalendar, SimLog, SimStats, LOOP_CAP};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptive::DescriptiveSet;
use crate::learn::PredictiveSet;
use crate::tree::{NodeId, ProcessTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("model is inconsistent: missing {}", .0.join(", "))]
    InconsistentModel(Vec<String>),
    #[error("simulation horizon is empty")]
    HorizonZero,
    #[error("no branching model for decision point {0}")]
    MissingBranchModel(NodeId),
    #[error("at least one replication is required")]
    NoReplications,
}

/// Model timestamp and update counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVersion {
    pub t: i64,
    pub i: u64,
}

/// A simulation model `(N, D, P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpsModel {
    pub tree: ProcessTree,
    pub d: DescriptiveSet,
    pub p: PredictiveSet,
    pub version: ModelVersion,
}

impl BpsModel {
    /// Errors with the list of elements of `(tree, d)` that have no model.
    pub fn check(&self) -> Result<(), SimError> {
        let missing = self.p.missing_keys(&self.tree, &self.d);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(SimError::InconsistentModel(missing))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    /// Number of cases to generate.
    Cases(usize),
    /// Last admissible arrival time; admitted cases run to completion.
    Until(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub start_time: i64,
    pub horizon: Horizon,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    pub fn cases(start_time: i64, n: usize, seed: u64) -> Self {
        SimConfig { start_time, horizon: Horizon::Cases(n), seed, replications: 5 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self.horizon {
            Horizon::Cases(0) => return Err(SimError::HorizonZero),
            Horizon::Until(t) if t < self.start_time => return Err(SimError::HorizonZero),
            _ => {}
        }
        if self.replications == 0 {
            return Err(SimError::NoReplications);
        }
        Ok(())
    }
}
