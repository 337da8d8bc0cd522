//! Experiment orchestration: the windowed evaluation protocol, the three
//! discovery techniques, grace-period sweeps, the synthetic drift scenario
//! and CSV/SVG output.

mod drift;
mod output;
mod plan;
mod protocol;
mod techniques;

pub use drift::{generate_drift_scenario, DriftManifest, DriftScenario, PhaseParams, PhaseStats};
pub use output::{emit_outputs, replot, series, series_from_reports, summary_table, OutputFiles, Series};
pub use plan::{CompletionSpec, ExperimentPlan, LogFormat, Technique, DEFAULT_GRACE_PERIODS, DEFAULT_TIMEOUT};
pub use protocol::{Protocol, ReadCounter};
pub use techniques::{
    advance, batch_model, evaluate_model, initial_online_state, online_lineage, run_experiment, run_last_batch, run_online,
    run_single_batch, run_technique, sweep_grace, AdvanceReport, Experiment, OnlineState, TechniqueRun, WindowCell,
};

use thiserror::Error;

use crate::learn::LearnError;
use crate::metrics::MetricError;
use crate::sim::SimError;
use crate::stream::StreamError;
use crate::tree::TreeError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid plan: {0}")]
    Plan(String),
    /// Windows are 1-based and inclusive.
    #[error("no complete trace in windows {from}..={to}")]
    NoCompleteTraces { from: usize, to: usize },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl PipelineError {
    /// 1 for plan errors, 2 for everything caused by the data or the disk.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Plan(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
