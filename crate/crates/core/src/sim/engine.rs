use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BpsModel, Horizon, SimConfig, SimError};
use crate::descriptive::{sample_attributes, sample_resource_where, WeeklyCalendar};
use crate::learn::{arrival_features, branching_features, duration_features, waiting_features, FeatureVector, Hat};
use crate::stream::{Event, HOUR};
use crate::tree::semantics::Compiled;
use crate::tree::{CaseRuntime, NodeId, ProcessTree, Step};

/// Redo decisions allowed per loop node and case.
pub const LOOP_CAP: u32 = 50;

/// Fallback counters; nonzero values mean parts of the model were empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub cases: usize,
    pub events: usize,
    /// Arrival gaps drawn without arrival data (one hour used).
    pub arrival_fallbacks: usize,
    /// Durations drawn from empty models (zero used).
    pub duration_fallbacks: usize,
    /// Decisions drawn uniformly because the model had no usable class.
    pub branch_fallbacks: usize,
    /// Resources with an all-zero calendar treated as always available.
    pub calendar_fallbacks: usize,
    /// Activities without a capable resource, run unconstrained.
    pub unassigned: usize,
    /// Loops forced to exit by [`LOOP_CAP`].
    pub loop_caps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    /// Events ordered by completion time.
    pub events: Vec<Event>,
    pub stats: SimStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Arrival,
    Complete { case: usize, leaf: u32 },
}

/// Pending simulation events keyed by time, plus resource occupation.
#[derive(Debug, Default)]
pub struct EventCalendar {
    queue: BinaryHeap<Reverse<(i64, u64, Pending)>>,
    seq: u64,
    now: i64,
    busy_until: HashMap<String, i64>,
    pub calendar_fallbacks: usize,
}

impl EventCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, at: i64, p: Pending) {
        self.queue.push(Reverse((at, self.seq, p)));
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<(i64, Pending)> {
        let Reverse((t, _, p)) = self.queue.pop()?;
        debug_assert!(t >= self.now, "time went backwards");
        self.now = t;
        Some((t, p))
    }

    pub fn busy_until(&self, resource: &str) -> Option<i64> {
        self.busy_until.get(resource).copied()
    }

    /// Marks `resource` occupied until `end`.
    pub fn book(&mut self, resource: &str, end: i64) {
        if resource.is_empty() {
            return;
        }
        let t = self.busy_until.entry(resource.to_string()).or_insert(end);
        *t = (*t).max(end);
    }
}

/// Start of an activity that becomes ready at `ready_at`: after the sampled
/// waiting time and after the resource frees up, moved to the next open
/// calendar slot. An empty resource name is never busy.
pub fn schedule_activity(cal: &mut EventCalendar, resource: &str, ready_at: i64, waiting: i64, calendar: &WeeklyCalendar) -> i64 {
    let free = cal.busy_until(resource).unwrap_or(i64::MIN);
    let earliest = (ready_at + waiting.max(0)).max(free);
    match calendar.next_open(earliest) {
        Some(t) => t,
        None => {
            cal.calendar_fallbacks += 1;
            earliest
        }
    }
}

/// Fires τ leaves and resolves choices until only activity leaves are
/// enabled; returns those leaves. `choose(node, options)` picks a class in
/// `0..options` (loops: 0 = exit, 1 = redo).
fn settle(
    rt: &mut CaseRuntime,
    redos: &mut HashMap<u32, u32>,
    capped: &mut usize,
    choose: &mut dyn FnMut(NodeId, usize) -> Result<usize, SimError>,
) -> Result<Vec<u32>, SimError> {
    loop {
        let enabled = rt.enabled();
        let instant = enabled.iter().find(|s| !matches!(s, Step::Fire(i) if rt.label(*i).is_some()));
        match instant {
            None => {
                return Ok(enabled
                    .into_iter()
                    .filter_map(|s| match s {
                        Step::Fire(i) => Some(i),
                        _ => None,
                    })
                    .collect())
            }
            Some(&Step::Fire(i)) => rt.apply(Step::Fire(i)),
            Some(&Step::Choose(x, _)) => {
                let options = enabled.iter().filter(|s| matches!(s, Step::Choose(y, _) if *y == x)).count();
                let c = choose(rt.node_id(x), options)?;
                rt.apply(Step::Choose(x, c as u32));
            }
            Some(&Step::Exit(l) | &Step::Redo(l)) => {
                let n = redos.entry(l).or_insert(0);
                let redo = if *n >= LOOP_CAP {
                    *capped += 1;
                    false
                } else {
                    choose(rt.node_id(l), 2)? == 1
                };
                if redo {
                    *n += 1;
                    rt.apply(Step::Redo(l));
                } else {
                    *n = 0;
                    rt.apply(Step::Exit(l));
                }
            }
        }
    }
}

/// Untimed walk through `tree`. Concurrent activities are interleaved
/// uniformly at random; `choose` returns `None` for decision points it has
/// no sampler for.
pub fn traverse<R: Rng>(
    tree: &ProcessTree,
    mut choose: impl FnMut(NodeId, usize, &mut R) -> Option<usize>,
    rng: &mut R,
) -> Result<Vec<String>, SimError> {
    let mut rt = CaseRuntime::new(tree);
    let mut redos = HashMap::new();
    let mut capped = 0;
    let mut out = Vec::new();
    while !rt.is_final() {
        let leaves = settle(&mut rt, &mut redos, &mut capped, &mut |node, n| {
            choose(node, n, rng).map(|c| c.min(n - 1)).ok_or(SimError::MissingBranchModel(node))
        })?;
        if leaves.is_empty() {
            break;
        }
        let leaf = leaves[rng.random_range(0..leaves.len())];
        out.push(rt.label(leaf).expect("activity leaf").to_string());
        rt.apply(Step::Fire(leaf));
    }
    Ok(out)
}

fn draw_class(model: &Hat, x: &FeatureVector, options: usize, rng: &mut ChaCha8Rng, fallbacks: &mut usize) -> usize {
    match model.sample_class(x, rng) {
        Some(c) if c < options => c,
        _ => {
            *fallbacks += 1;
            rng.random_range(0..options)
        }
    }
}

struct Case {
    id: String,
    arrival: i64,
    rt: CaseRuntime,
    redos: HashMap<u32, u32>,
    running: BTreeMap<u32, Event>,
    last_activity: String,
    last_resource: String,
}

struct Run<'a> {
    model: &'a BpsModel,
    net: Arc<Compiled>,
    rng: ChaCha8Rng,
    cal: EventCalendar,
    cases: Vec<Case>,
    log: Vec<Event>,
    stats: SimStats,
    always_open: WeeklyCalendar,
}

fn round_secs(x: f64) -> i64 {
    if x.is_finite() {
        x.max(0.0).round() as i64
    } else {
        0
    }
}

impl<'a> Run<'a> {
    fn arrive(&mut self, t: i64) -> Result<(), SimError> {
        let k = self.cases.len();
        self.cases.push(Case {
            id: format!("c{k}"),
            arrival: t,
            rt: CaseRuntime::from_compiled(self.net.clone()),
            redos: HashMap::new(),
            running: BTreeMap::new(),
            last_activity: String::new(),
            last_resource: String::new(),
        });
        self.stats.cases += 1;
        self.progress(k, t)
    }

    fn progress(&mut self, k: usize, t: i64) -> Result<(), SimError> {
        let Run { model, rng, cases, stats, .. } = self;
        let case = &mut cases[k];
        let x = branching_features(&case.last_activity, &case.last_resource, t, t - case.arrival);
        let mut fallbacks = 0;
        let leaves = settle(&mut case.rt, &mut case.redos, &mut stats.loop_caps, &mut |node, n| {
            let m = model.p.branching.get(&node).ok_or(SimError::MissingBranchModel(node))?;
            Ok(draw_class(m, &x, n, rng, &mut fallbacks))
        })?;
        stats.branch_fallbacks += fallbacks;
        for leaf in leaves {
            if !self.cases[k].running.contains_key(&leaf) {
                self.start(k, leaf, t);
            }
        }
        Ok(())
    }

    fn start(&mut self, k: usize, leaf: u32, ready: i64) {
        let (p, pool) = (&self.model.p, &self.model.d.pool);
        let activity = self.cases[k].rt.label(leaf).expect("activity leaf").to_string();
        let cal = &self.cal;
        let idle = |r: &str| cal.busy_until(r).is_none_or(|t| t <= ready);
        let resource = sample_resource_where(pool, &activity, ready, idle, &mut self.rng).unwrap_or_else(|_| {
            self.stats.unassigned += 1;
            String::new()
        });
        let waiting = p.waiting.get(&resource).and_then(|m| m.sample_value(&waiting_features(&activity, ready), &mut self.rng));
        let calendar = match pool.get(&resource) {
            Some(r) if !r.calendar.is_all_zero() => &r.calendar,
            Some(_) => {
                self.stats.calendar_fallbacks += 1;
                &self.always_open
            }
            None => &self.always_open,
        };
        let start = schedule_activity(&mut self.cal, &resource, ready, waiting.map_or(0, round_secs), calendar);
        let elapsed = start - self.cases[k].arrival;
        let duration = match p.duration.get(&activity).and_then(|m| m.sample_value(&duration_features(&resource, start, elapsed), &mut self.rng)) {
            Some(d) => round_secs(d),
            None => {
                self.stats.duration_fallbacks += 1;
                0
            }
        };
        let end = start + duration;
        self.cal.book(&resource, end);
        let mut e = Event::new(self.cases[k].id.clone(), activity.clone(), resource, end).with_start(start);
        e.attributes = sample_attributes(&self.model.d.attributes, &activity, &mut self.rng);
        self.cases[k].running.insert(leaf, e);
        self.cal.push(end, Pending::Complete { case: k, leaf });
    }

    fn complete(&mut self, k: usize, leaf: u32, t: i64) -> Result<(), SimError> {
        let case = &mut self.cases[k];
        let e = case.running.remove(&leaf).expect("running activity");
        case.rt.apply(Step::Fire(leaf));
        case.last_activity.clone_from(&e.activity);
        case.last_resource.clone_from(&e.resource);
        self.log.push(e);
        self.progress(k, t)
    }

    fn next_gap(&mut self, t: i64) -> i64 {
        match self.model.p.arrival.sample_value(&arrival_features(t), &mut self.rng) {
            Some(g) => round_secs(g).max(1),
            None => {
                self.stats.arrival_fallbacks += 1;
                HOUR
            }
        }
    }
}

fn run_once(model: &BpsModel, cfg: &SimConfig, seed: u64) -> Result<SimLog, SimError> {
    let mut run = Run {
        model,
        net: Arc::new(Compiled::new(&model.tree)),
        rng: ChaCha8Rng::seed_from_u64(seed),
        cal: EventCalendar::new(),
        cases: Vec::new(),
        log: Vec::new(),
        stats: SimStats::default(),
        always_open: WeeklyCalendar::always_open(),
    };
    run.cal.push(cfg.start_time, Pending::Arrival);
    while let Some((t, p)) = run.cal.pop() {
        match p {
            Pending::Arrival => {
                run.arrive(t)?;
                let gap = run.next_gap(t);
                let more = match cfg.horizon {
                    Horizon::Cases(n) => run.cases.len() < n,
                    Horizon::Until(end) => t + gap <= end,
                };
                if more {
                    run.cal.push(t + gap, Pending::Arrival);
                }
            }
            Pending::Complete { case, leaf } => run.complete(case, leaf, t)?,
        }
    }
    run.stats.calendar_fallbacks += run.cal.calendar_fallbacks;
    run.stats.events = run.log.len();
    Ok(SimLog { events: run.log, stats: run.stats })
}

/// One simulation run seeded with `cfg.seed`.
pub fn simulate(model: &BpsModel, cfg: &SimConfig) -> Result<SimLog, SimError> {
    cfg.validate()?;
    model.check()?;
    run_once(model, cfg, cfg.seed)
}

/// `cfg.replications` runs in parallel; run `k` uses seed `cfg.seed ^ k`,
/// so run 0 equals [`simulate`].
pub fn replicate(model: &BpsModel, cfg: &SimConfig) -> Result<Vec<SimLog>, SimError> {
    cfg.validate()?;
    model.check()?;
    (0..cfg.replications as u64).into_par_iter().map(|k| run_once(model, cfg, cfg.seed ^ k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptive::{DescriptiveSet, SLOTS};
    use crate::learn::{HoeffdingBoundParams, PredictiveSet, Target};
    use crate::sim::ModelVersion;
    use crate::stream::{group_traces, write_csv, DAY};
    use crate::tree::Operator;

    /// Monday 2024-01-01 00:00 UTC.
    const MONDAY: i64 = 1_704_067_200;

    fn model(tree: &str, resources: &[(&str, &str)]) -> BpsModel {
        let tree = ProcessTree::parse(tree).unwrap();
        let events: Vec<Event> = resources
            .iter()
            .enumerate()
            .flat_map(|(i, (r, a))| (0..168).map(move |h| Event::new(format!("c{i}"), *a, *r, MONDAY + h * HOUR)))
            .collect();
        let d = DescriptiveSet::from_events(&events);
        let mut p = PredictiveSet::new(HoeffdingBoundParams::default()).unwrap();
        p.ensure_models(&tree, &d);
        BpsModel { tree, d, p, version: ModelVersion::default() }
    }

    fn teach_value(m: &mut Hat, x: FeatureVector, values: impl IntoIterator<Item = f64>) {
        for v in values {
            m.learn_one(&x, Target::Value(v)).unwrap();
        }
    }

    #[test]
    fn constant_single_activity_cases() {
        let mut m = model("a", &[("r", "a")]);
        let x = duration_features("r", MONDAY, 0);
        teach_value(m.p.duration.get_mut("a").unwrap(), x, [60.0; 20]);
        teach_value(&mut m.p.arrival, arrival_features(MONDAY), [7_200.0; 20]);
        let log = simulate(&m, &SimConfig::cases(MONDAY, 3, 1)).unwrap();
        let traces = group_traces(&log.events);
        assert_eq!(traces.len(), 3);
        for t in &traces {
            assert_eq!(t.activities(), vec!["a"]);
            assert_eq!(t.events[0].timestamp - t.events[0].start.unwrap(), 60);
        }
        assert_eq!(log.stats.duration_fallbacks, 0);
    }

    #[test]
    fn friday_night_waits_for_monday_morning() {
        let mut w = vec![0.0; SLOTS];
        for day in 0..5 {
            for h in 9..17 {
                w[day * 24 + h] = 1.0;
            }
        }
        let cal = WeeklyCalendar::from_weights(&w);
        let friday_2330 = MONDAY + 4 * DAY + 23 * HOUR + 1_800;
        let mut ec = EventCalendar::new();
        assert_eq!(schedule_activity(&mut ec, "r", friday_2330, 0, &cal), MONDAY + 7 * DAY + 9 * HOUR);
        let tuesday_10 = MONDAY + DAY + 10 * HOUR;
        assert_eq!(schedule_activity(&mut ec, "r", tuesday_10, 0, &cal), tuesday_10);
        ec.book("r", tuesday_10 + 600);
        assert_eq!(schedule_activity(&mut ec, "r", tuesday_10, 0, &cal), tuesday_10 + 600);
        assert_eq!(schedule_activity(&mut ec, "r", tuesday_10, 1_200, &cal), tuesday_10 + 1_200);
        let closed = WeeklyCalendar::default();
        assert_eq!(schedule_activity(&mut ec, "q", tuesday_10, 0, &closed), tuesday_10);
        assert_eq!(ec.calendar_fallbacks, 1);
    }

    fn loan_model(seed: u64) -> BpsModel {
        let mut m = model(
            "→(request, ×(automated, manual), notify)",
            &[("clerk", "request"), ("system", "automated"), ("ann", "manual"), ("bob", "notify")],
        );
        let xor = m.tree.decision_points()[0].clone();
        let auto = xor.labels.iter().position(|l| l == "automated").unwrap();
        let x = branching_features("request", "clerk", MONDAY, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = m.p.branching.get_mut(&xor.id).unwrap();
        for i in 0..1_000 {
            b.learn_one(&x, Target::Class(if i % 5 == 4 { 1 - auto } else { auto })).unwrap();
        }
        let around = |mean: f64, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..500).map(|_| mean + 60.0 * (rng.random::<f64>() - 0.5)).collect() };
        let (auto_d, manual_d) = (around(600.0, &mut rng), around(3_000.0, &mut rng));
        teach_value(m.p.duration.get_mut("automated").unwrap(), duration_features("system", MONDAY, 0), auto_d);
        teach_value(m.p.duration.get_mut("manual").unwrap(), duration_features("ann", MONDAY, 0), manual_d);
        teach_value(&mut m.p.arrival, arrival_features(MONDAY), [600.0; 20]);
        m
    }

    #[test]
    fn branch_shares_and_durations_follow_the_model() {
        let m = loan_model(3);
        let log = simulate(&m, &SimConfig::cases(MONDAY, 2_000, 11)).unwrap();
        let auto: Vec<i64> =
            log.events.iter().filter(|e| e.activity == "automated").map(|e| e.timestamp - e.start.unwrap()).collect();
        let manual = log.events.iter().filter(|e| e.activity == "manual").count();
        assert_eq!(auto.len() + manual, 2_000);
        let share = auto.len() as f64 / 2_000.0;
        assert!((share - 0.8).abs() <= 0.03, "{share}");
        let mut sorted = auto.clone();
        sorted.sort_unstable();
        let median = sorted[sorted.len() / 2];
        assert!((median - 600).abs() <= 10, "{median}");
        assert_eq!(log.stats.branch_fallbacks, 0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let m = loan_model(5);
        let cfg = SimConfig::cases(MONDAY, 300, 42);
        let csv = |log: &SimLog| {
            let mut buf = Vec::new();
            write_csv(&log.events, &mut buf).unwrap();
            buf
        };
        let (a, b) = (simulate(&m, &cfg).unwrap(), simulate(&m, &cfg).unwrap());
        assert_eq!(csv(&a), csv(&b));
        let reps = replicate(&m, &cfg).unwrap();
        assert_eq!(reps.len(), 5);
        assert_eq!(csv(&reps[0]), csv(&a));
        assert_ne!(csv(&reps[1]), csv(&a));
    }

    #[test]
    fn resources_never_overlap() {
        let m = loan_model(7);
        let log = simulate(&m, &SimConfig::cases(MONDAY, 500, 9)).unwrap();
        let mut by_res: BTreeMap<&str, Vec<(i64, i64)>> = BTreeMap::new();
        for e in &log.events {
            by_res.entry(&e.resource).or_default().push((e.start.unwrap(), e.timestamp));
        }
        for iv in by_res.values_mut() {
            iv.sort_unstable();
            assert!(iv.windows(2).all(|w| w[0].1 <= w[1].0));
        }
    }

    #[test]
    fn traverse_without_choices_is_deterministic() {
        let t = ProcessTree::parse("→(a, b, c)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(traverse(&t, |_, _, _: &mut ChaCha8Rng| None, &mut rng).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn traverse_reports_missing_samplers_and_interleaves() {
        let t = ProcessTree::parse("→(×(a, b), c)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xor = t.decision_points()[0].id;
        assert_eq!(traverse(&t, |_, _, _: &mut ChaCha8Rng| None, &mut rng), Err(SimError::MissingBranchModel(xor)));
        assert_eq!(traverse(&t, |_, _, _: &mut ChaCha8Rng| Some(0), &mut rng).unwrap(), vec!["a", "c"]);
        let par = ProcessTree::parse("∧(a, b)").unwrap();
        let firsts: Vec<String> = (0..200).map(|_| traverse(&par, |_, _, _: &mut ChaCha8Rng| None, &mut rng).unwrap()[0].clone()).collect();
        let a_first = firsts.iter().filter(|f| *f == "a").count();
        assert!((60..=140).contains(&a_first), "{a_first}");
    }

    #[test]
    fn loops_stop_at_the_cap() {
        let t = ProcessTree::parse("⟲(a, τ)").unwrap();
        assert_eq!(t.decision_points()[0].kind, Operator::Loop);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = traverse(&t, |_, _, _: &mut ChaCha8Rng| Some(1), &mut rng).unwrap();
        assert_eq!(trace.len(), LOOP_CAP as usize + 1);
    }

    #[test]
    fn model_errors() {
        let mut m = model("→(a, ×(b, c))", &[("r", "a")]);
        let cfg = SimConfig::cases(MONDAY, 0, 1);
        assert_eq!(simulate(&m, &cfg), Err(SimError::HorizonZero));
        m.p.branching.clear();
        assert!(matches!(simulate(&m, &SimConfig::cases(MONDAY, 1, 1)), Err(SimError::InconsistentModel(_))));
        let until = SimConfig { horizon: Horizon::Until(MONDAY - 1), ..SimConfig::cases(MONDAY, 1, 1) };
        assert_eq!(until.validate(), Err(SimError::HorizonZero));
    }

    #[test]
    fn empty_models_fall_back_and_still_finish() {
        let m = model("→(a, ×(b, c), ⟲(d, τ))", &[("r", "a"), ("s", "b")]);
        let cfg = SimConfig { horizon: Horizon::Until(MONDAY + 10 * HOUR), ..SimConfig::cases(MONDAY, 1, 3) };
        let log = simulate(&m, &cfg).unwrap();
        assert_eq!(log.stats.cases, 11);
        assert!(log.stats.arrival_fallbacks > 0 && log.stats.branch_fallbacks > 0 && log.stats.unassigned > 0);
    }
}
