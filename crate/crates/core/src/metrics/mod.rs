//! Distances between a real and a simulated event log.
//!
//! Control flow: CFLD and 3GD, both in [0, 1]. Time: AED, RED, CAR (hours,
//! hour-wide bins), CED and CWD (hours on the weekly circle) and CTD
//! (minutes).

mod control;
mod temporal;
mod transport;

pub use control::{cfld, hungarian, normalized_edit_distance, three_gram_distance, HUNGARIAN_LIMIT};
pub use temporal::{ctd, cwd, temporal_distance, TemporalKind};
pub use transport::{circular_emd, wasserstein_1d, weekly_histogram, BinnedSeries};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::Trace;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetricError {
    #[error("empty sample")]
    EmptySample,
    #[error("empty log")]
    EmptyLog,
    #[error("no resource appears in both logs")]
    NoSharedResources,
    #[error("non-finite sample value")]
    NonFinite,
    #[error("report output failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Cfld,
    ThreeGram,
    Aed,
    Red,
    Ced,
    Cwd,
    Car,
    Ctd,
}

impl Metric {
    pub const ALL: [Metric; 8] = [Metric::Cfld, Metric::ThreeGram, Metric::Aed, Metric::Red, Metric::Ced, Metric::Cwd, Metric::Car, Metric::Ctd];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cfld => "CFLD",
            Metric::ThreeGram => "3GD",
            Metric::Aed => "AED",
            Metric::Red => "RED",
            Metric::Ced => "CED",
            Metric::Cwd => "CWD",
            Metric::Car => "CAR",
            Metric::Ctd => "CTD",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub window: usize,
    pub technique: String,
    pub replication: usize,
}

/// The eight distances for one (real, simulated) pair. A metric that could
/// not be computed is `Err` with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub meta: ReportMeta,
    pub values: Vec<(Metric, Result<f64, MetricError>)>,
    /// CFLD used greedy instead of exact matching.
    pub approximate_matching: bool,
    /// Resources seen in only one of the logs (left out of CWD).
    pub unshared_resources: usize,
}

impl DistanceReport {
    pub fn get(&self, m: Metric) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == m).and_then(|(_, v)| v.as_ref().ok().copied())
    }

    pub fn cfld(&self) -> Option<f64> {
        self.get(Metric::Cfld)
    }

    pub fn ctd(&self) -> Option<f64> {
        self.get(Metric::Ctd)
    }
}

/// Computes all eight distances; failures are recorded per metric.
pub fn evaluate_pair(real: &[Trace], sim: &[Trace], meta: ReportMeta) -> DistanceReport {
    let (ra, sa): (Vec<Vec<String>>, Vec<Vec<String>>) =
        (real.iter().map(Trace::activities).collect(), sim.iter().map(Trace::activities).collect());
    let mut approximate_matching = false;
    let mut unshared_resources = 0;
    let values = Metric::ALL
        .into_iter()
        .map(|m| {
            let v = match m {
                Metric::Cfld => cfld(&ra, &sa).map(|(v, approx)| {
                    approximate_matching = approx;
                    v
                }),
                Metric::ThreeGram => three_gram_distance(&ra, &sa),
                Metric::Aed => temporal_distance(TemporalKind::Aed, real, sim),
                Metric::Red => temporal_distance(TemporalKind::Red, real, sim),
                Metric::Ced => temporal_distance(TemporalKind::Ced, real, sim),
                Metric::Cwd => cwd(real, sim).map(|(v, u)| {
                    unshared_resources = u;
                    v
                }),
                Metric::Car => temporal_distance(TemporalKind::Car, real, sim),
                Metric::Ctd => ctd(real, sim),
            };
            (m, v)
        })
        .collect();
    DistanceReport { meta, values, approximate_matching, unshared_resources }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        Some(Summary { mean, std, n })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({:.2})", self.mean, self.std)
    }
}

/// Summary of one metric over a set of reports, skipping missing values.
pub fn summarize(reports: &[DistanceReport], m: Metric) -> Option<Summary> {
    Summary::of(&reports.iter().filter_map(|r| r.get(m)).collect::<Vec<_>>())
}

/// One row per (window, technique, replication, metric); missing values
/// leave `value` empty and name the reason in `note`.
pub fn write_report_csv<W: Write>(reports: &[DistanceReport], out: W) -> Result<(), MetricError> {
    let io = |e: csv::Error| MetricError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window", "technique", "replication", "metric", "value", "note"]).map_err(io)?;
    for r in reports {
        for (m, v) in &r.values {
            let (value, note) = match v {
                Ok(x) => (format!("{x}"), String::new()),
                Err(e) => (String::new(), e.to_string()),
            };
            w.write_record([r.meta.window.to_string(), r.meta.technique.clone(), r.meta.replication.to_string(), m.name().to_string(), value, note])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| MetricError::Io(e.to_string()))
}
