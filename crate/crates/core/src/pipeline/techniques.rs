use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{ExperimentPlan, Technique};
use super::protocol::{Protocol, ReadCounter};
use super::PipelineError;
use crate::descriptive::{update_descriptive, DescriptiveSet};
use crate::learn::{build_training_instances, update_predictive_set, HoeffdingBoundParams, PredictiveSet};
use crate::metrics::{evaluate_pair, DistanceReport, Metric, ReportMeta, Summary};
use crate::sim::{replicate, BpsModel, Horizon, ModelVersion, SimConfig, SimStats};
use crate::stream::{
    assemble_fragments, group_traces, CaseLedger, CompletionPolicy, Event, FragmentKind, StreamWindow, TraceFragment, WindowBounds,
};
use crate::tree::{discover_initial_tree, incremental_update};

/// An online model lineage between two windows.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    pub model: BpsModel,
    pub ledger: CaseLedger,
}

/// Counters of one update step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvanceReport {
    pub fragments: usize,
    pub complete: usize,
    pub prefix: usize,
    pub infix: usize,
    pub postfix: usize,
    /// Fragments the tree repair gave up on.
    pub rejected: Vec<String>,
    pub repairs: usize,
    pub instances: usize,
    pub skipped_unalignable: usize,
    pub durations_from_gaps: usize,
}

impl AdvanceReport {
    fn count(frags: &[TraceFragment]) -> Self {
        let mut r = AdvanceReport { fragments: frags.len(), ..Default::default() };
        for f in frags {
            match f.kind {
                FragmentKind::Complete => r.complete += 1,
                FragmentKind::Prefix => r.prefix += 1,
                FragmentKind::Infix => r.infix += 1,
                FragmentKind::Postfix => r.postfix += 1,
            }
        }
        r
    }
}

/// One update step: fragments, then the tree, then the descriptive and
/// finally the predictive parameters. Unalignable fragments are counted,
/// not fatal.
pub fn advance(
    state: &OnlineState,
    window: &StreamWindow,
    policy: &CompletionPolicy,
    params: &HoeffdingBoundParams,
) -> Result<(OnlineState, AdvanceReport), PipelineError> {
    let (frags, ledger) = assemble_fragments(window, policy, &state.ledger);
    let update = incremental_update(&state.model.tree, &frags);
    let d = update_descriptive(&state.model.d, window);
    let instances = build_training_instances(&frags, &update.tree, state.model.p.last_arrival);
    let p = update_predictive_set(&state.model.p, &instances, &update.tree, &d, params)?;
    let report = AdvanceReport {
        rejected: update.rejected,
        repairs: update.repairs,
        instances: instances.len(),
        skipped_unalignable: instances.skipped_unalignable,
        durations_from_gaps: instances.durations_from_gaps,
        ..AdvanceReport::count(&frags)
    };
    let version = ModelVersion { t: window.end, i: state.model.version.i + 1 };
    Ok((OnlineState { model: BpsModel { tree: update.tree, d, p, version }, ledger }, report))
}

/// Batch discovery: tree from the complete traces, descriptive parameters
/// from `events`, predictive models induced in one pass.
pub fn batch_model(
    complete: &[TraceFragment],
    events: &[Event],
    noise_threshold: f64,
    params: HoeffdingBoundParams,
    version: ModelVersion,
) -> Result<BpsModel, PipelineError> {
    let acts: Vec<Vec<String>> = complete.iter().map(TraceFragment::activities).collect();
    let tree = discover_initial_tree(&acts, noise_threshold)?;
    let d = DescriptiveSet::from_events(events);
    let instances = build_training_instances(complete, &tree, None);
    let p = PredictiveSet::fit_batch(&instances, &tree, &d, params)?;
    Ok(BpsModel { tree, d, p, version })
}

fn version_at(protocol: &Protocol, i: usize) -> ModelVersion {
    ModelVersion { t: protocol.windows()[i - 1].end, i: i as u64 }
}

/// Model from the complete traces of windows `1..=i` (1-based).
pub fn run_single_batch(protocol: &Protocol, plan: &ExperimentPlan, i: usize, grace: u64, reads: &mut ReadCounter) -> Result<BpsModel, PipelineError> {
    let complete = protocol.complete_fragments(0, i - 1, reads);
    if complete.is_empty() {
        return Err(PipelineError::NoCompleteTraces { from: 1, to: i });
    }
    let events = protocol.window_range(0, i - 1, reads).events;
    batch_model(&complete, &events, plan.noise_threshold, plan.params(grace), version_at(protocol, i))
}

/// Model from the complete traces of window `i` alone (1-based).
pub fn run_last_batch(protocol: &Protocol, plan: &ExperimentPlan, i: usize, grace: u64, reads: &mut ReadCounter) -> Result<BpsModel, PipelineError> {
    let complete = protocol.complete_fragments(i - 1, i - 1, reads);
    if complete.is_empty() {
        return Err(PipelineError::NoCompleteTraces { from: i, to: i });
    }
    let events = protocol.window(i - 1, reads).events;
    batch_model(&complete, &events, plan.noise_threshold, plan.params(grace), version_at(protocol, i))
}

/// The online lineage's starting point: a batch model of the first
/// window's complete traces plus the ledger of its open cases.
pub fn initial_online_state(
    protocol: &Protocol,
    plan: &ExperimentPlan,
    grace: u64,
    reads: &mut ReadCounter,
) -> Result<(OnlineState, AdvanceReport), PipelineError> {
    let w = protocol.window(0, reads);
    let (frags, ledger) = assemble_fragments(&w, protocol.policy(), &CaseLedger::default());
    let complete: Vec<TraceFragment> = frags.iter().filter(|f| f.kind == FragmentKind::Complete).cloned().collect();
    if complete.is_empty() {
        return Err(PipelineError::NoCompleteTraces { from: 1, to: 1 });
    }
    let model = batch_model(&complete, &w.events, plan.noise_threshold, plan.params(grace), version_at(protocol, 1))?;
    Ok((OnlineState { model, ledger }, AdvanceReport::count(&frags)))
}

/// Online models after each of the `k` windows, with their update counters
/// and the cumulative reads.
pub fn online_lineage(protocol: &Protocol, plan: &ExperimentPlan, grace: u64) -> Result<Vec<(BpsModel, AdvanceReport, ReadCounter)>, PipelineError> {
    let params = plan.params(grace);
    let mut reads = ReadCounter::default();
    let (mut state, first) = initial_online_state(protocol, plan, grace, &mut reads)?;
    let mut out = vec![(state.model.clone(), first, reads)];
    for i in 1..protocol.k() {
        let w = protocol.window(i, &mut reads);
        let (next, report) = advance(&state, &w, protocol.policy(), &params)?;
        state = next;
        out.push((state.model.clone(), report, reads));
    }
    Ok(out)
}

/// Evaluation of the model built through window `i` (1-based) against
/// window `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCell {
    pub window: usize,
    pub test_cases: usize,
    /// Reason the cell has no reports.
    pub skipped: Option<String>,
    pub reports: Vec<DistanceReport>,
    /// Everything read to build and evaluate this cell.
    pub reads: ReadCounter,
    pub advance: Option<AdvanceReport>,
    pub sim_stats: Vec<SimStats>,
}

impl WindowCell {
    fn skipped(window: usize, reason: String, reads: ReadCounter) -> Self {
        WindowCell { window, test_cases: 0, skipped: Some(reason), reports: Vec::new(), reads, advance: None, sim_stats: Vec::new() }
    }

    /// Mean of `m` over the replications, if any produced it.
    pub fn mean(&self, m: Metric) -> Option<f64> {
        Summary::of(&self.reports.iter().filter_map(|r| r.get(m)).collect::<Vec<_>>()).map(|s| s.mean)
    }
}

/// Simulates `model` for as many cases as window `i + 1` has test traces
/// and scores every replication against them. The seed depends on the
/// window only, so techniques are compared on the same random streams.
pub fn evaluate_model(protocol: &Protocol, plan: &ExperimentPlan, model: &BpsModel, i: usize, label: &str, mut reads: ReadCounter) -> WindowCell {
    let test = protocol.test_log(i, &mut reads);
    if test.is_empty() {
        return WindowCell::skipped(i, format!("no complete case starts in window {}", i + 1), reads);
    }
    let start = test.iter().filter_map(|t| t.case_start()).min().unwrap_or(protocol.windows()[i].start);
    let cfg = SimConfig { start_time: start, horizon: Horizon::Cases(test.len()), seed: plan.seed ^ ((i as u64) << 20), replications: plan.replications };
    match replicate(model, &cfg) {
        Ok(logs) => {
            let reports = logs
                .iter()
                .enumerate()
                .map(|(r, log)| evaluate_pair(&test, &group_traces(&log.events), ReportMeta { window: i, technique: label.to_string(), replication: r }))
                .collect();
            WindowCell {
                window: i,
                test_cases: test.len(),
                skipped: None,
                reports,
                reads,
                advance: None,
                sim_stats: logs.iter().map(|l| l.stats).collect(),
            }
        }
        Err(e) => WindowCell { test_cases: test.len(), ..WindowCell::skipped(i, format!("simulation failed: {e}"), reads) },
    }
}

/// Models and evaluation cells of one technique. `models[i - 1]` is the
/// model at the end of window `i`; `cells[i - 1]` scores it on window
/// `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueRun {
    pub technique: Technique,
    pub label: String,
    pub grace: u64,
    pub models: Vec<Option<BpsModel>>,
    pub cells: Vec<WindowCell>,
}

impl TechniqueRun {
    /// Per-window means of `m`; skipped windows are `None`.
    pub fn points(&self, m: Metric) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.mean(m)).collect()
    }

    /// Mean and spread of the per-window means of `m`.
    pub fn summary(&self, m: Metric) -> Option<Summary> {
        Summary::of(&self.points(m).into_iter().flatten().collect::<Vec<_>>())
    }

    pub fn reports(&self) -> impl Iterator<Item = &DistanceReport> {
        self.cells.iter().flat_map(|c| &c.reports)
    }
}

/// Online technique: initial model from the first window, then one update
/// per window.
pub fn run_online(protocol: &Protocol, plan: &ExperimentPlan, grace: u64, label: &str) -> Result<TechniqueRun, PipelineError> {
    let lineage = online_lineage(protocol, plan, grace)?;
    let cells = (1..protocol.k())
        .into_par_iter()
        .map(|i| {
            let (model, report, reads) = &lineage[i - 1];
            WindowCell { advance: Some(report.clone()), ..evaluate_model(protocol, plan, model, i, label, *reads) }
        })
        .collect();
    Ok(TechniqueRun {
        technique: Technique::Online,
        label: label.to_string(),
        grace,
        models: lineage.into_iter().map(|(m, _, _)| Some(m)).collect(),
        cells,
    })
}

pub fn run_technique(protocol: &Protocol, plan: &ExperimentPlan, technique: Technique, grace: u64, label: &str) -> Result<TechniqueRun, PipelineError> {
    if technique == Technique::Online {
        return run_online(protocol, plan, grace, label);
    }
    let k = protocol.k();
    let built: Vec<(Option<BpsModel>, WindowCell)> = (1..k)
        .into_par_iter()
        .map(|i| {
            let mut reads = ReadCounter::default();
            let model = match technique {
                Technique::SingleBatch => run_single_batch(protocol, plan, i, grace, &mut reads),
                _ => run_last_batch(protocol, plan, i, grace, &mut reads),
            };
            match model {
                Ok(m) => {
                    let cell = evaluate_model(protocol, plan, &m, i, label, reads);
                    Ok((Some(m), cell))
                }
                Err(e @ PipelineError::NoCompleteTraces { .. }) => Ok((None, WindowCell::skipped(i, e.to_string(), reads))),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, PipelineError>>()?;
    let (mut models, cells): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    models.push(None);
    Ok(TechniqueRun { technique, label: label.to_string(), grace, models, cells })
}

/// One online run per grace period, labelled `online_g<grace>`.
pub fn sweep_grace(protocol: &Protocol, plan: &ExperimentPlan) -> Result<Vec<TechniqueRun>, PipelineError> {
    plan.grace_periods.par_iter().map(|&g| run_online(protocol, plan, g, &format!("online_g{g}"))).collect()
}

/// All runs of a plan. `sweep` holds the grace-period runs when the plan
/// leaves the online grace period open; the best of them by the plan's
/// rank metric becomes the `online` run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub windows: Vec<WindowBounds>,
    pub runs: Vec<TechniqueRun>,
    pub sweep: Vec<TechniqueRun>,
    pub grace: u64,
}

fn select_grace(sweep: &[TechniqueRun], m: Metric) -> Option<usize> {
    let score = |r: &TechniqueRun| r.summary(m).map_or(f64::INFINITY, |s| s.mean);
    (0..sweep.len()).min_by(|&a, &b| score(&sweep[a]).total_cmp(&score(&sweep[b])))
}

pub fn run_experiment(plan: &ExperimentPlan, events: Vec<Event>) -> Result<Experiment, PipelineError> {
    plan.validate()?;
    let protocol = Protocol::new(events, plan.windows, plan.policy())?;
    let wants_online = plan.techniques.contains(&Technique::Online);
    let (sweep, grace) = match plan.grace_period {
        Some(g) => (Vec::new(), g),
        None if wants_online => {
            let sweep = sweep_grace(&protocol, plan)?;
            let best = select_grace(&sweep, plan.rank()).unwrap_or(0);
            let g = sweep[best].grace;
            (sweep, g)
        }
        None => (Vec::new(), plan.grace_periods[0]),
    };
    let runs = plan
        .techniques
        .par_iter()
        .map(|&t| match sweep.iter().find(|r| t == Technique::Online && r.grace == grace) {
            Some(r) => Ok(TechniqueRun { label: t.name().to_string(), ..relabel(r, t.name()) }),
            None => run_technique(&protocol, plan, t, grace, t.name()),
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(Experiment { windows: protocol.windows().to_vec(), runs, sweep, grace })
}

fn relabel(run: &TechniqueRun, label: &str) -> TechniqueRun {
    let mut r = run.clone();
    for rep in r.cells.iter_mut().flat_map(|c| c.reports.iter_mut()) {
        rep.meta.technique = label.to_string();
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::drift::generate_drift_scenario;
    use crate::pipeline::CompletionSpec;
    use crate::stream::{Event, DAY, WEEK};
    use crate::tree::{fits, language_sample, ProcessTree};

    const MONDAY: i64 = 1_704_067_200;

    fn plan(k: usize) -> ExperimentPlan {
        ExperimentPlan {
            windows: k,
            replications: 2,
            grace_period: Some(100),
            completion: CompletionSpec { end_activities: vec!["notify".into()], timeout_hours: None },
            ..ExperimentPlan::new("unused.csv")
        }
    }

    /// Loan cases every `gap` seconds over `weeks` weeks.
    fn loan_log(weeks: i64, gap: i64) -> Vec<Event> {
        let mut evs = Vec::new();
        let mut t = MONDAY;
        let mut n = 0;
        while t < MONDAY + weeks * WEEK - DAY {
            let id = format!("k{n}");
            let branch = if n % 2 == 0 { "manual" } else { "automated" };
            evs.push(Event::new(&id, "request", "clerk", t + 300).with_start(t));
            evs.push(Event::new(&id, branch, format!("{branch}-1"), t + 2_100).with_start(t + 300));
            evs.push(Event::new(&id, "notify", "clerk", t + 2_220).with_start(t + 2_100));
            t += gap;
            n += 1;
        }
        evs
    }

    fn state(events: &[Event]) -> (Protocol, OnlineState) {
        let p = plan(2);
        let proto = Protocol::new(events.to_vec(), 2, p.policy()).unwrap();
        let (s, _) = initial_online_state(&proto, &p, 100, &mut ReadCounter::default()).unwrap();
        (proto, s)
    }

    #[test]
    fn empty_window_only_bumps_the_version() {
        let (_, s) = state(&loan_log(2, 3 * 3_600));
        let empty = StreamWindow::empty(s.model.version.t, s.model.version.t + WEEK);
        let (next, report) = advance(&s, &empty, &plan(2).policy(), &plan(2).params(100)).unwrap();
        assert_eq!(next.model.version, ModelVersion { t: s.model.version.t + WEEK, i: s.model.version.i + 1 });
        assert_eq!(next.model.tree, s.model.tree);
        assert_eq!(next.model.d, s.model.d);
        assert_eq!(next.model.p, s.model.p);
        assert_eq!(report.fragments, 0);
    }

    #[test]
    fn drifted_window_adds_the_loan_offer() {
        let (_, s) = state(&loan_log(2, 3 * 3_600));
        let t0 = s.model.version.t + 600;
        let mut evs = Vec::new();
        for n in 0..60 {
            let id = format!("post{n}");
            let t = t0 + n * 3_600;
            let branch = if n % 5 == 0 { "manual" } else { "automated" };
            evs.push(Event::new(&id, "request", "clerk", t + 300).with_start(t));
            evs.push(Event::new(&id, branch, format!("{branch}-1"), t + 900).with_start(t + 300));
            evs.push(Event::new(&id, "loan offer", "advisor", t + 1_800).with_start(t + 900));
            evs.push(Event::new(&id, "notify", "clerk", t + 1_920).with_start(t + 1_800));
        }
        evs.sort_by_key(|e| e.timestamp);
        let w = StreamWindow { start: s.model.version.t, end: s.model.version.t + WEEK, events: evs };
        let (next, report) = advance(&s, &w, &plan(2).policy(), &plan(2).params(100)).unwrap();
        assert!(next.model.tree.alphabet().contains("loan offer"));
        assert!(report.repairs >= 1);
        let acts = |a: &[&str]| a.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(fits(&next.model.tree, &acts(&["request", "automated", "loan offer", "notify"]), FragmentKind::Complete).unwrap());
        assert!(fits(&next.model.tree, &acts(&["request", "manual", "notify"]), FragmentKind::Complete).unwrap());
        // the xor keeps its id and its model has now seen mostly automated
        let dp = s.model.tree.decision_points();
        let xor = dp.iter().find(|d| d.labels.iter().any(|l| l == "automated")).unwrap();
        let auto = xor.labels.iter().position(|l| l == "automated").unwrap();
        let before = s.model.p.branching[&xor.id].leaf_counts(&crate::learn::branching_features("request", "clerk", t0, 300));
        let after = next.model.p.branching[&xor.id].leaf_counts(&crate::learn::branching_features("request", "clerk", t0, 300));
        let share = |c: &[f64]| c[auto] / c.iter().sum::<f64>();
        assert!(share(&after) > share(&before), "{before:?} {after:?}");
        assert!(next.model.check().is_ok());
    }

    #[test]
    fn two_steps_contain_the_language_of_one() {
        let events = loan_log(3, 2 * 3_600);
        let p = plan(3);
        let proto = Protocol::new(events, 3, p.policy()).unwrap();
        let lineage = online_lineage(&proto, &p, 100).unwrap();
        let mut reads = ReadCounter::default();
        let (s0, _) = initial_online_state(&proto, &p, 100, &mut reads).unwrap();
        let joint = proto.window_range(1, 2, &mut reads);
        let (merged, _) = advance(&s0, &joint, proto.policy(), &p.params(100)).unwrap();
        let stepwise = &lineage[2].0.tree;
        for tree in [stepwise, &merged.model.tree] {
            for t in language_sample(&s0.model.tree, 200, 7) {
                assert!(fits(tree, &t, FragmentKind::Complete).unwrap());
            }
        }
        for w in lineage.windows(2) {
            for t in language_sample(&w[0].0.tree, 100, 3) {
                assert!(fits(&w[1].0.tree, &t, FragmentKind::Complete).unwrap());
            }
        }
    }

    #[test]
    fn single_batch_of_the_first_window_is_the_initial_online_model() {
        let events = loan_log(3, 3 * 3_600);
        let p = plan(3);
        let proto = Protocol::new(events, 3, p.policy()).unwrap();
        let sb = run_single_batch(&proto, &p, 1, 100, &mut ReadCounter::default()).unwrap();
        let (s, _) = initial_online_state(&proto, &p, 100, &mut ReadCounter::default()).unwrap();
        assert_eq!(sb, s.model);
    }

    #[test]
    fn missing_complete_traces_are_reported() {
        // every case runs past the end of the first window
        let mut evs = Vec::new();
        for n in 0..20 {
            let t = MONDAY + n * 3_600;
            evs.push(Event::new(format!("c{n}"), "request", "clerk", t));
            evs.push(Event::new(format!("c{n}"), "notify", "clerk", t + 3 * WEEK));
        }
        let p = plan(2);
        let proto = Protocol::new(evs, 2, p.policy()).unwrap();
        assert!(matches!(
            run_single_batch(&proto, &p, 1, 100, &mut ReadCounter::default()),
            Err(PipelineError::NoCompleteTraces { from: 1, to: 1 })
        ));
        let run = run_technique(&proto, &p, Technique::LastBatch, 100, "last_batch").unwrap();
        assert!(run.cells[0].skipped.is_some());
        assert_eq!(run.points(Metric::Ctd), vec![None]);
        assert!(matches!(run_online(&proto, &p, 100, "online"), Err(PipelineError::NoCompleteTraces { .. })));
    }

    #[test]
    fn evaluation_never_reads_past_the_next_window() {
        let scenario = generate_drift_scenario(3, 300, 300).unwrap();
        let p = ExperimentPlan { windows: 4, completion: CompletionSpec { end_activities: vec!["notify".into()], timeout_hours: None }, ..plan(4) };
        let exp = run_experiment(&p, scenario.events).unwrap();
        assert_eq!(exp.runs.len(), 3);
        for run in &exp.runs {
            assert_eq!(run.cells.len(), 3);
            for c in &run.cells {
                assert!(c.reads.max_ts <= exp.windows[c.window].end, "{} window {}", run.label, c.window);
                assert!(c.reads.events > 0);
            }
        }
        let online = exp.runs.iter().find(|r| r.technique == Technique::Online).unwrap();
        assert_eq!(online.models.len(), 4);
        assert!(online.models.iter().all(Option::is_some));
    }

    #[test]
    fn open_grace_period_triggers_a_sweep() {
        let scenario = generate_drift_scenario(5, 150, 150).unwrap();
        let p = ExperimentPlan {
            grace_period: None,
            techniques: vec![Technique::Online],
            replications: 1,
            windows: 3,
            ..plan(3)
        };
        let exp = run_experiment(&p, scenario.events).unwrap();
        assert_eq!(exp.sweep.iter().map(|r| r.grace).collect::<Vec<_>>(), vec![100, 500, 1_000, 5_000, 10_000, 50_000]);
        assert_eq!(exp.sweep[0].label, "online_g100");
        assert_eq!(exp.runs[0].label, "online");
        assert!(p.grace_periods.contains(&exp.grace));
        assert!(exp.runs[0].reports().all(|r| r.meta.technique == "online"));
    }

    #[test]
    fn fitted_tree_is_the_loan_process() {
        let (_, s) = state(&loan_log(2, 3 * 3_600));
        let expected = ProcessTree::parse("→(request, ×(automated, manual), notify)").unwrap();
        assert_eq!(s.model.tree.shape(), expected.shape());
    }
}
