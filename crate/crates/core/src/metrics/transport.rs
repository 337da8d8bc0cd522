//! One-dimensional optimal transport on the line and on the weekly circle.

use std::collections::BTreeMap;

use super::MetricError;
use crate::descriptive::SLOTS;
use crate::stream::{hour_of_week, HOUR};

/// W1 between two weighted point sets on the line, each normalized to unit
/// mass: the integral of |F_a - F_b| over the merged support.
fn transport_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().map(|p| p.1).sum(), b.iter().map(|p| p.1).sum());
    let mut pts: Vec<(f64, f64)> = a.iter().map(|&(x, m)| (x, m / ta)).chain(b.iter().map(|&(x, m)| (x, -m / tb))).collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf = 0.0;
    let mut total = 0.0;
    for w in pts.windows(2) {
        cdf += w[0].1;
        total += cdf.abs() * (w[1].0 - w[0].0);
    }
    total
}

/// Exact W1 between two empirical samples; inputs need not be sorted.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySample);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let unit = |xs: &[f64]| xs.iter().map(|&x| (x, 1.0)).collect::<Vec<_>>();
    Ok(transport_line(&unit(a), &unit(b)))
}

/// Histogram over hour-wide bins keyed by bin index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinnedSeries {
    pub bins: BTreeMap<i64, f64>,
}

impl BinnedSeries {
    /// Unit mass per timestamp in bin `floor(ts / 3600)`.
    pub fn hourly(timestamps: impl IntoIterator<Item = i64>) -> Self {
        let mut s = BinnedSeries::default();
        for t in timestamps {
            *s.bins.entry(t.div_euclid(HOUR)).or_default() += 1.0;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.bins.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() <= 0.0
    }

    /// W1 in bin units after normalizing both series to unit mass.
    pub fn emd(&self, other: &BinnedSeries) -> Result<f64, MetricError> {
        if self.is_empty() || other.is_empty() {
            return Err(MetricError::EmptySample);
        }
        let pts = |s: &BinnedSeries| s.bins.iter().map(|(&k, &m)| (k as f64, m)).collect::<Vec<_>>();
        Ok(transport_line(&pts(self), &pts(other)))
    }
}

/// Mass per hour of the week.
pub fn weekly_histogram(timestamps: impl IntoIterator<Item = i64>) -> [f64; SLOTS] {
    let mut h = [0.0; SLOTS];
    for t in timestamps {
        h[hour_of_week(t)] += 1.0;
    }
    h
}

/// W1 on the 168-slot circle with unit distance between adjacent slots.
/// The optimum shifts the cumulative difference by one of its own values.
pub fn circular_emd(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    assert_eq!(a.len(), b.len(), "histograms share their bins");
    let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if ta <= 0.0 || tb <= 0.0 {
        return Err(MetricError::EmptySample);
    }
    let mut cum = Vec::with_capacity(a.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x / ta - y / tb;
        cum.push(acc);
    }
    Ok(cum.iter().map(|&c| cum.iter().map(|d| (d - c).abs()).sum::<f64>()).fold(f64::INFINITY, f64::min))
}
