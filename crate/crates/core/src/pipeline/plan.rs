use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::learn::HoeffdingBoundParams;
use crate::metrics::Metric;
use crate::stream::{read_csv, read_xes, CompletionPolicy, CsvSchema, Event, DAY};
use crate::tree::DEFAULT_NOISE_THRESHOLD;

pub const DEFAULT_GRACE_PERIODS: [u64; 6] = [100, 500, 1_000, 5_000, 10_000, 50_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    SingleBatch,
    LastBatch,
    Online,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::SingleBatch, Technique::LastBatch, Technique::Online];

    pub fn name(self) -> &'static str {
        match self {
            Technique::SingleBatch => "single_batch",
            Technique::LastBatch => "last_batch",
            Technique::Online => "online",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    #[default]
    Csv,
    Xes,
}

/// Case completion rule in plan files; the timeout is in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionSpec {
    #[serde(default)]
    pub end_activities: Vec<String>,
    #[serde(default)]
    pub timeout_hours: Option<f64>,
}

impl Default for CompletionSpec {
    fn default() -> Self {
        CompletionSpec { end_activities: Vec::new(), timeout_hours: Some(30.0 * 24.0) }
    }
}

impl CompletionSpec {
    pub fn policy(&self) -> CompletionPolicy {
        CompletionPolicy {
            end_activities: self.end_activities.iter().cloned().collect(),
            timeout: self.timeout_hours.map(|h| (h * 3_600.0).round() as i64),
        }
    }
}

fn d_windows() -> usize {
    10
}
fn d_techniques() -> Vec<Technique> {
    Technique::ALL.to_vec()
}
fn d_replications() -> usize {
    5
}
fn d_graces() -> Vec<u64> {
    DEFAULT_GRACE_PERIODS.to_vec()
}
fn d_rank() -> String {
    "CTD".into()
}
fn d_output() -> PathBuf {
    PathBuf::from("runs")
}
fn d_depth() -> usize {
    5
}
fn d_noise() -> f64 {
    DEFAULT_NOISE_THRESHOLD
}
fn d_schema() -> CsvSchema {
    CsvSchema::simulated()
}

/// Experiment description, read from TOML.
///
/// ```toml
/// input = "loan.csv"            # relative to the plan file
/// windows = 10
/// techniques = ["single_batch", "last_batch", "online"]
/// replications = 5
/// grace_periods = [100, 500, 1000, 5000, 10000, 50000]
/// grace_period = 1000           # omit to pick the best of grace_periods
/// rank_metric = "CTD"
/// seed = 7
/// output_dir = "runs"
///
/// [schema]
/// case = "case_id"
/// activity = "activity"
/// timestamp = "end_ts"
/// resource = "resource"
/// start = "start_ts"
///
/// [completion]
/// end_activities = ["notify"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub input: PathBuf,
    #[serde(default)]
    pub format: LogFormat,
    #[serde(default = "d_schema")]
    pub schema: CsvSchema,
    #[serde(default = "d_windows")]
    pub windows: usize,
    #[serde(default = "d_techniques")]
    pub techniques: Vec<Technique>,
    #[serde(default = "d_replications")]
    pub replications: usize,
    #[serde(default = "d_graces")]
    pub grace_periods: Vec<u64>,
    /// Grace period of the online technique; `None` selects the best
    /// value of `grace_periods` by `rank_metric`.
    #[serde(default)]
    pub grace_period: Option<u64>,
    #[serde(default = "d_rank")]
    pub rank_metric: String,
    #[serde(default)]
    pub completion: CompletionSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    #[serde(default = "d_depth")]
    pub max_depth: usize,
    #[serde(default = "d_noise")]
    pub noise_threshold: f64,
    /// Also write every per-window model as JSON.
    #[serde(default)]
    pub write_checkpoints: bool,
}

impl ExperimentPlan {
    /// A plan over `input` with every other field at its default.
    pub fn new(input: impl Into<PathBuf>) -> Self {
        toml::from_str::<ExperimentPlan>("input = \"\"").map(|p| ExperimentPlan { input: input.into(), ..p }).expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let plan: ExperimentPlan = toml::from_str(text).map_err(|e| PipelineError::Plan(e.message().to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan; a relative `input` or `output_dir` is resolved against
    /// the plan's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Plan(format!("{}: {e}", path.display())))?;
        let mut plan = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if plan.input.is_relative() {
            plan.input = base.join(&plan.input);
        }
        if plan.output_dir.is_relative() {
            plan.output_dir = base.join(&plan.output_dir);
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Plan(m.to_string()));
        if self.windows < 2 {
            return bad("windows must be at least 2");
        }
        if self.techniques.is_empty() {
            return bad("techniques must not be empty");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.grace_periods.is_empty() || self.grace_periods.contains(&0) || self.grace_period == Some(0) {
            return bad("grace periods must be positive and the list nonempty");
        }
        if Metric::parse(&self.rank_metric).is_none() {
            return Err(PipelineError::Plan(format!("unknown rank metric `{}`", self.rank_metric)));
        }
        if !(0.0..1.0).contains(&self.noise_threshold) {
            return bad("noise_threshold must lie in [0, 1)");
        }
        if self.completion.timeout_hours.is_some_and(|h| !(h.is_finite() && h > 0.0)) {
            return bad("completion timeout must be a positive number of hours");
        }
        self.completion.policy().validate().map_err(|e| PipelineError::Plan(e.to_string()))?;
        self.params(self.grace_period.unwrap_or(self.grace_periods[0])).validate().map_err(|e| PipelineError::Plan(e.to_string()))
    }

    pub fn rank(&self) -> Metric {
        Metric::parse(&self.rank_metric).unwrap_or(Metric::Ctd)
    }

    pub fn policy(&self) -> CompletionPolicy {
        self.completion.policy()
    }

    pub fn params(&self, grace: u64) -> HoeffdingBoundParams {
        HoeffdingBoundParams { max_depth: self.max_depth, ..HoeffdingBoundParams::default() }.with_grace_period(grace)
    }

    /// Loads the input log.
    pub fn read_log(&self) -> Result<Vec<Event>, PipelineError> {
        let f = File::open(&self.input).map_err(|e| PipelineError::Io { path: self.input.display().to_string(), message: e.to_string() })?;
        let events = match self.format {
            LogFormat::Csv => read_csv(f, &self.schema)?,
            LogFormat::Xes => read_xes(BufReader::new(f))?,
        };
        Ok(events)
    }
}

/// Default completion rule for logs without end activities.
pub const DEFAULT_TIMEOUT: i64 = 30 * DAY;
