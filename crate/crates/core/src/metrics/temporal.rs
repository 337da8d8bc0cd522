//! Timing distances. Linear ones are in hours on hour-wide bins, circadian
//! ones on the 168 hours of the week; cycle times are in minutes.

use std::collections::BTreeMap;

use super::transport::{circular_emd, wasserstein_1d, weekly_histogram, BinnedSeries};
use super::MetricError;
use crate::stream::{Event, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemporalKind {
    /// Absolute event distribution.
    Aed,
    /// Event distribution relative to case start.
    Red,
    /// Circadian event distribution.
    Ced,
    /// Circadian workload per shared resource.
    Cwd,
    /// Case arrivals.
    Car,
}

/// Start (when recorded) and completion of every event.
fn stamps(e: &Event) -> impl Iterator<Item = i64> {
    e.start.into_iter().chain(std::iter::once(e.timestamp))
}

fn all_stamps(log: &[Trace]) -> impl Iterator<Item = i64> + '_ {
    log.iter().flat_map(|t| t.events.iter().flat_map(stamps))
}

fn relative_stamps(log: &[Trace]) -> impl Iterator<Item = i64> + '_ {
    log.iter().flat_map(|t| {
        let cs = t.case_start().unwrap_or(0);
        t.events.iter().flat_map(stamps).map(move |s| s - cs)
    })
}

fn nonempty(log: &[Trace]) -> Result<(), MetricError> {
    if log.iter().all(|t| t.events.is_empty()) {
        Err(MetricError::EmptyLog)
    } else {
        Ok(())
    }
}

fn by_resource(log: &[Trace]) -> BTreeMap<&str, Vec<i64>> {
    let mut out: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for e in log.iter().flat_map(|t| &t.events) {
        if !e.resource.is_empty() {
            out.entry(e.resource.as_str()).or_default().extend(stamps(e));
        }
    }
    out
}

/// Circadian workload distance averaged over resources present in both
/// logs, and the number of resources present in only one of them.
pub fn cwd(real: &[Trace], sim: &[Trace]) -> Result<(f64, usize), MetricError> {
    nonempty(real)?;
    nonempty(sim)?;
    let (a, b) = (by_resource(real), by_resource(sim));
    let shared: Vec<&str> = a.keys().filter(|r| b.contains_key(*r)).copied().collect();
    let unshared = a.len() + b.len() - 2 * shared.len();
    if shared.is_empty() {
        return Err(MetricError::NoSharedResources);
    }
    let mut total = 0.0;
    for r in &shared {
        let (ha, hb) = (weekly_histogram(a[r].iter().copied()), weekly_histogram(b[r].iter().copied()));
        total += circular_emd(&ha, &hb)?;
    }
    Ok((total / shared.len() as f64, unshared))
}

pub fn temporal_distance(kind: TemporalKind, real: &[Trace], sim: &[Trace]) -> Result<f64, MetricError> {
    nonempty(real)?;
    nonempty(sim)?;
    match kind {
        TemporalKind::Aed => BinnedSeries::hourly(all_stamps(real)).emd(&BinnedSeries::hourly(all_stamps(sim))),
        TemporalKind::Red => BinnedSeries::hourly(relative_stamps(real)).emd(&BinnedSeries::hourly(relative_stamps(sim))),
        TemporalKind::Ced => circular_emd(&weekly_histogram(all_stamps(real)), &weekly_histogram(all_stamps(sim))),
        TemporalKind::Cwd => cwd(real, sim).map(|c| c.0),
        TemporalKind::Car => {
            let starts = |log: &[Trace]| BinnedSeries::hourly(log.iter().filter_map(Trace::case_start).collect::<Vec<_>>());
            starts(real).emd(&starts(sim))
        }
    }
}

fn cycle_minutes(log: &[Trace]) -> Vec<f64> {
    log.iter()
        .filter_map(|t| Some((t.case_end()? - t.case_start()?) as f64 / 60.0))
        .collect()
}

/// W1 between cycle-time samples, in minutes.
pub fn ctd(real: &[Trace], sim: &[Trace]) -> Result<f64, MetricError> {
    let (a, b) = (cycle_minutes(real), cycle_minutes(sim));
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyLog);
    }
    wasserstein_1d(&a, &b)
}
