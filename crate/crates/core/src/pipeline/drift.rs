//! Synthetic loan-application log with one sudden drift: automated review
//! becomes more likely and faster, and a loan offer is added before the
//! notification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::stream::{CompletionPolicy, Event, WEEK};

/// Monday 2024-01-01 00:00 UTC.
pub const SCENARIO_START: i64 = 1_704_067_200;
/// Length of the pre-drift phase.
pub const PRE_SPAN: i64 = 27 * WEEK / 2;
/// Length of the post-drift phase.
pub const POST_SPAN: i64 = 6 * WEEK;
pub const MIN_CASES: usize = 100;

const REQUEST: &str = "request";
const AUTOMATED: &str = "automated review";
const MANUAL: &str = "manual review";
const LOAN_OFFER: &str = "loan offer";
const NOTIFY: &str = "notify";

/// True process parameters of one phase; durations are means in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub cases: usize,
    pub start: i64,
    pub end: i64,
    pub automated_share: f64,
    pub request_minutes: f64,
    pub automated_minutes: f64,
    pub manual_minutes: f64,
    pub loan_offer_minutes: Option<f64>,
    pub notify_minutes: f64,
    pub mean_interarrival_seconds: f64,
}

/// What the generated phase actually contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub cases: usize,
    pub automated: usize,
    pub automated_share: f64,
    pub automated_median_minutes: f64,
    pub manual_median_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftManifest {
    pub seed: u64,
    pub drift_at: i64,
    pub pre: PhaseParams,
    pub post: PhaseParams,
    pub observed_pre: PhaseStats,
    pub observed_post: PhaseStats,
    pub end_activities: Vec<String>,
    pub activities: Activities,
}

/// Activity names used in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activities {
    pub request: String,
    pub automated: String,
    pub manual: String,
    pub loan_offer: String,
    pub notify: String,
}

impl Default for Activities {
    fn default() -> Self {
        Activities {
            request: REQUEST.into(),
            automated: AUTOMATED.into(),
            manual: MANUAL.into(),
            loan_offer: LOAN_OFFER.into(),
            notify: NOTIFY.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftScenario {
    /// Events with start and completion times, ordered by completion.
    pub events: Vec<Event>,
    pub manifest: DriftManifest,
}

impl DriftScenario {
    pub fn policy(&self) -> CompletionPolicy {
        CompletionPolicy::with_end_activities(self.manifest.end_activities.iter().cloned())
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes")
    }
}

/// Resources of one role. Work goes to the member that can start it
/// earliest, filling idle gaps between earlier bookings.
struct Pool {
    names: Vec<String>,
    /// Disjoint busy intervals per member, sorted.
    busy: Vec<Vec<(i64, i64)>>,
}

impl Pool {
    fn new(prefix: &str, n: usize) -> Self {
        Pool { names: (1..=n).map(|i| format!("{prefix}-{i}")).collect(), busy: vec![Vec::new(); n] }
    }

    /// Earliest start at or after `ready` with `seconds` of free time, and
    /// the insertion index.
    fn slot(busy: &[(i64, i64)], ready: i64, seconds: i64) -> (i64, usize) {
        let mut at = ready;
        let mut i = busy.partition_point(|b| b.1 <= ready);
        while i < busy.len() && busy[i].0 < at + seconds {
            at = at.max(busy[i].1);
            i += 1;
        }
        (at, i)
    }

    /// Books a member that can start first, uniformly among ties; returns
    /// (resource, start).
    fn book(&mut self, ready: i64, seconds: i64, rng: &mut ChaCha8Rng) -> (String, i64) {
        let slots: Vec<(i64, usize)> = self.busy.iter().map(|b| Self::slot(b, ready, seconds)).collect();
        let first = slots.iter().map(|s| s.0).min().expect("nonempty pool");
        let ties: Vec<usize> = (0..slots.len()).filter(|&k| slots[k].0 == first).collect();
        let k = ties[rng.random_range(0..ties.len())];
        self.busy[k].insert(slots[k].1, (first, first + seconds));
        (self.names[k].clone(), first)
    }
}

fn minutes(rng: &mut ChaCha8Rng, mean: f64) -> i64 {
    let d = Normal::new(mean, 0.1 * mean).expect("positive spread").sample(rng);
    ((d * 60.0).round() as i64).max(1)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn phase(cases: usize, start: i64, end: i64, automated_share: f64, automated_minutes: f64, loan_offer_minutes: Option<f64>) -> PhaseParams {
    PhaseParams {
        cases,
        start,
        end,
        automated_share,
        request_minutes: 5.0,
        automated_minutes,
        manual_minutes: 50.0,
        loan_offer_minutes,
        notify_minutes: 2.0,
        mean_interarrival_seconds: (end - start) as f64 / cases as f64,
    }
}

/// Generates `n_pre` cases before and `n_post` cases after the drift.
/// Arrivals are a Poisson process conditioned on the case counts: uniform
/// over 13.5 weeks before and 6 weeks after the drift.
pub fn generate_drift_scenario(seed: u64, n_pre: usize, n_post: usize) -> Result<DriftScenario, PipelineError> {
    if n_pre < MIN_CASES || n_post < MIN_CASES {
        return Err(PipelineError::Plan(format!("each phase needs at least {MIN_CASES} cases")));
    }
    let drift_at = SCENARIO_START + PRE_SPAN;
    let pre = phase(n_pre, SCENARIO_START, drift_at, 0.5, 30.0, None);
    let post = phase(n_post, drift_at, drift_at + POST_SPAN, 0.8, 10.0, Some(15.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arrivals: Vec<(i64, bool)> = Vec::with_capacity(n_pre + n_post);
    for p in [&pre, &post] {
        let mut ts: Vec<i64> = (0..p.cases).map(|_| rng.random_range(p.start..p.end)).collect();
        ts.sort_unstable();
        arrivals.extend(ts.into_iter().map(|t| (t, p.start == drift_at)));
    }

    let mut clerks = Pool::new("clerk", 3);
    let mut bots = Pool::new("bot", 4);
    let mut reviewers = Pool::new("reviewer", 6);
    let mut advisors = Pool::new("advisor", 3);
    let mut events = Vec::with_capacity(5 * arrivals.len());
    let (mut pre_auto, mut post_auto) = ((0, Vec::new(), Vec::new()), (0, Vec::new(), Vec::new()));
    for (n, &(arrival, after)) in arrivals.iter().enumerate() {
        let p = if after { &post } else { &pre };
        let id = format!("case-{n:05}");
        let mut push = |act: &str, (res, start): (String, i64), secs: i64| {
            events.push(Event::new(&id, act, res, start + secs).with_start(start));
            start + secs
        };
        let d = minutes(&mut rng, p.request_minutes);
        let mut t = push(REQUEST, clerks.book(arrival, d, &mut rng), d);
        let automated = rng.random_bool(p.automated_share);
        let stats = if after { &mut post_auto } else { &mut pre_auto };
        if automated {
            let d = minutes(&mut rng, p.automated_minutes);
            stats.0 += 1;
            stats.1.push(d as f64 / 60.0);
            t = push(AUTOMATED, bots.book(t, d, &mut rng), d);
        } else {
            let d = minutes(&mut rng, p.manual_minutes);
            stats.2.push(d as f64 / 60.0);
            t = push(MANUAL, reviewers.book(t, d, &mut rng), d);
        }
        if let Some(m) = p.loan_offer_minutes {
            let d = minutes(&mut rng, m);
            t = push(LOAN_OFFER, advisors.book(t, d, &mut rng), d);
        }
        let d = minutes(&mut rng, p.notify_minutes);
        push(NOTIFY, clerks.book(t, d, &mut rng), d);
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.case_id.cmp(&b.case_id)));

    let observed = |cases: usize, (auto, mut a, mut m): (usize, Vec<f64>, Vec<f64>)| PhaseStats {
        cases,
        automated: auto,
        automated_share: auto as f64 / cases as f64,
        automated_median_minutes: median(&mut a),
        manual_median_minutes: median(&mut m),
    };
    let manifest = DriftManifest {
        seed,
        drift_at,
        observed_pre: observed(n_pre, pre_auto),
        observed_post: observed(n_post, post_auto),
        pre,
        post,
        end_activities: vec![NOTIFY.into()],
        activities: Activities::default(),
    };
    Ok(DriftScenario { events, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn manifest_records_both_phases() {
        let s = generate_drift_scenario(1, 1_000, 1_000).unwrap();
        assert_eq!(s.manifest.pre.automated_share, 0.5);
        assert_eq!(s.manifest.post.automated_share, 0.8);
        assert_eq!(s.manifest.post.automated_minutes, 10.0);
        assert_eq!(s.manifest.pre.automated_minutes, 30.0);
        assert_eq!(s.manifest.pre.manual_minutes, 50.0);
        assert!(s.manifest.pre.loan_offer_minutes.is_none());
        assert!(s.manifest.post.loan_offer_minutes.is_some());
    }

    #[test]
    fn observed_shares_lie_within_binomial_bounds() {
        for seed in 0..5 {
            let s = generate_drift_scenario(seed, 2_000, 2_000).unwrap();
            // 4 standard errors of a binomial share on 2000 draws
            let se = |p: f64| 4.0 * (p * (1.0 - p) / 2_000.0).sqrt();
            assert!((s.manifest.observed_pre.automated_share - 0.5).abs() < se(0.5));
            assert!((s.manifest.observed_post.automated_share - 0.8).abs() < se(0.8));
            // the observed counts agree with the log
            let auto = s.events.iter().filter(|e| e.activity == AUTOMATED).count();
            assert_eq!(auto, s.manifest.observed_pre.automated + s.manifest.observed_post.automated);
            assert!((s.manifest.observed_post.automated_median_minutes - 10.0).abs() < 0.5);
        }
    }

    #[test]
    fn cases_are_well_formed_and_resources_never_overlap() {
        let s = generate_drift_scenario(9, 300, 300).unwrap();
        assert!(s.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        let mut by_case: HashMap<&str, Vec<&Event>> = HashMap::new();
        let mut by_res: HashMap<&str, Vec<(i64, i64)>> = HashMap::new();
        for e in &s.events {
            by_case.entry(&e.case_id).or_default().push(e);
            by_res.entry(&e.resource).or_default().push((e.start.unwrap(), e.timestamp));
        }
        assert_eq!(by_case.len(), 600);
        for evs in by_case.values() {
            assert_eq!(evs.first().unwrap().activity, REQUEST);
            assert_eq!(evs.last().unwrap().activity, NOTIFY);
            let post = evs[0].start.unwrap() >= s.manifest.drift_at;
            assert_eq!(evs.iter().any(|e| e.activity == LOAN_OFFER), post);
        }
        for spans in by_res.values_mut() {
            spans.sort_unstable();
            assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0));
        }
    }

    #[test]
    fn same_seed_same_log() {
        let a = generate_drift_scenario(4, 200, 200).unwrap();
        let b = generate_drift_scenario(4, 200, 200).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, generate_drift_scenario(5, 200, 200).unwrap().events);
        assert!(generate_drift_scenario(4, 99, 200).is_err());
    }
}
