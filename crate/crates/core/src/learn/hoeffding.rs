use serde::{Deserialize, Serialize};

use super::LearnError;

/// Split-decision parameters of a Hoeffding tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingBoundParams {
    /// Range of the split merit; classification trees override it with
    /// `log2(classes)`.
    pub range: f64,
    pub delta: f64,
    pub tie_threshold: f64,
    pub grace_period: u64,
    pub max_depth: usize,
    /// Confidence of the drift detectors.
    pub adwin_delta: f64,
    /// Disables alternate subtrees and leaf resets.
    pub drift_detection: bool,
}

impl Default for HoeffdingBoundParams {
    fn default() -> Self {
        HoeffdingBoundParams {
            range: 1.0,
            delta: 1e-7,
            tie_threshold: 0.05,
            grace_period: 200,
            max_depth: 5,
            adwin_delta: 0.002,
            drift_detection: true,
        }
    }
}

impl HoeffdingBoundParams {
    pub fn with_grace_period(mut self, grace_period: u64) -> Self {
        self.grace_period = grace_period;
        self
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |what: &str| Err(LearnError::InvalidParams(what.to_string()));
        if !(self.range > 0.0) {
            return bad("range must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.tie_threshold >= 0.0) {
            return bad("tie threshold must be nonnegative");
        }
        if self.grace_period == 0 {
            return bad("grace period must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max depth must be at least 1");
        }
        if !(self.adwin_delta > 0.0 && self.adwin_delta < 1.0) {
            return bad("adwin delta must lie in (0, 1)");
        }
        Ok(())
    }
}

/// `sqrt(R² ln(1/δ) / 2n)`.
pub fn hoeffding_epsilon(p: &HoeffdingBoundParams, n: u64) -> f64 {
    epsilon(p.range, p.delta, n)
}

pub(crate) fn epsilon(range: f64, delta: f64, n: u64) -> f64 {
    assert!(n >= 1, "the bound needs at least one observation");
    (range * range * (1.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}
