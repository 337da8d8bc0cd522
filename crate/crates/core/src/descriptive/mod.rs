//! Descriptive parameters: resources with capabilities and weekly
//! calendars, plus event-attribute distributions.

mod attributes;
mod calendar;

pub use attributes::{sample_attributes, AttributeModel, AttributeModels, Reservoir, RESERVOIR_CAP};
pub use calendar::{calendar_from_events, calendar_over, WeeklyCalendar, CLOSED_BIN_ALPHA, SLOTS};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::{Event, StreamWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptiveError {
    #[error("no resource performs `{0}`")]
    NoCapableResource(String),
    #[error("invalid descriptive set: {0}")]
    Json(String),
}

/// Minimum events a known resource needs in a window before its calendar
/// is recomputed.
pub const CALENDAR_MIN_EVENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub activities: BTreeMap<String, u64>,
    pub events: u64,
    pub calendar: WeeklyCalendar,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourcePool {
    pub resources: BTreeMap<String, ResourceProfile>,
}

impl ResourcePool {
    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn get(&self, resource: &str) -> Option<&ResourceProfile> {
        self.resources.get(resource)
    }

    /// Resources that performed `activity`, with their frequencies.
    pub fn capable(&self, activity: &str) -> Vec<(&str, u64)> {
        self.resources
            .iter()
            .filter_map(|(r, p)| p.activities.get(activity).map(|&f| (r.as_str(), f)))
            .collect()
    }
}

/// The descriptive part of a simulation model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveSet {
    pub pool: ResourcePool,
    pub attributes: AttributeModels,
}

impl DescriptiveSet {
    pub fn from_events(events: &[Event]) -> Self {
        let mut d = DescriptiveSet::default();
        let from = events.iter().map(Event::start_or_complete).min().unwrap_or(0);
        let to = events.iter().map(|e| e.timestamp.max(e.start_or_complete())).max().map_or(0, |t| t + 1);
        d.absorb(events, from, to);
        d
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptive set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DescriptiveError> {
        serde_json::from_str(s).map_err(|e| DescriptiveError::Json(e.to_string()))
    }

    /// `[from, to)` is the observed span; a resource seen for the first time
    /// is only watched from its first event on.
    fn absorb(&mut self, events: &[Event], from: i64, to: i64) {
        let mut by_resource: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
        for e in events {
            self.attributes.observe(&e.activity, &e.attributes);
            if !e.resource.is_empty() {
                by_resource.entry(e.resource.as_str()).or_default().push(e);
            }
        }
        for (res, evs) in by_resource {
            let times: Vec<i64> = evs.iter().map(|e| e.start_or_complete()).collect();
            let known = self.pool.resources.contains_key(res);
            let profile = self.pool.resources.entry(res.to_string()).or_insert_with(|| ResourceProfile {
                activities: BTreeMap::new(),
                events: 0,
                calendar: WeeklyCalendar::default(),
            });
            for e in &evs {
                *profile.activities.entry(e.activity.clone()).or_default() += 1;
            }
            profile.events += evs.len() as u64;
            if !known || evs.len() >= CALENDAR_MIN_EVENTS {
                let first = if known { from } else { times.iter().copied().min().unwrap_or(from).max(from) };
                profile.calendar = calendar_over(&times, first, to.max(first + 1));
            }
        }
    }
}

/// Folds a window into `d`: new resources enter with a calendar from their
/// window events, known resources get their calendar recomputed from this
/// window alone (given enough events), capability counts and attribute
/// models accumulate.
pub fn update_descriptive(d: &DescriptiveSet, window: &StreamWindow) -> DescriptiveSet {
    let mut next = d.clone();
    next.absorb(&window.events, window.start, window.end);
    next
}

/// Draws a resource for `activity` with probability proportional to
/// capability frequency times calendar weight at `at`; frequency alone when
/// every capable resource is off duty.
pub fn sample_resource(pool: &ResourcePool, activity: &str, at: i64, rng: &mut impl Rng) -> Result<String, DescriptiveError> {
    sample_resource_where(pool, activity, at, |_| true, rng)
}

/// As [`sample_resource`], restricted to the capable resources for which
/// `idle` holds when there is at least one.
pub fn sample_resource_where(
    pool: &ResourcePool,
    activity: &str,
    at: i64,
    idle: impl Fn(&str) -> bool,
    rng: &mut impl Rng,
) -> Result<String, DescriptiveError> {
    let mut capable = pool.capable(activity);
    if capable.is_empty() {
        return Err(DescriptiveError::NoCapableResource(activity.to_string()));
    }
    if capable.iter().any(|(r, _)| idle(r)) {
        capable.retain(|(r, _)| idle(r));
    }
    let weighted: Vec<f64> = capable.iter().map(|(r, f)| *f as f64 * pool.resources[*r].calendar.weight_at(at)).collect();
    let weights: Vec<f64> =
        if weighted.iter().sum::<f64>() > 0.0 { weighted } else { capable.iter().map(|(_, f)| *f as f64).collect() };
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return Ok(capable[i].0.to_string());
        }
        r -= w;
    }
    Ok(capable.last().expect("nonempty").0.to_string())
}
