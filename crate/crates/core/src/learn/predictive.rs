use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Schema};
use super::hat::{fit_batch, Hat, Target, Task};
use super::hoeffding::HoeffdingBoundParams;
use super::instances::TrainingInstances;
use super::LearnError;
use crate::descriptive::DescriptiveSet;
use crate::tree::{NodeId, ProcessTree};

/// The predictive part of a simulation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSet {
    pub params: HoeffdingBoundParams,
    pub duration: BTreeMap<String, Hat>,
    pub waiting: BTreeMap<String, Hat>,
    pub arrival: Hat,
    pub branching: BTreeMap<NodeId, Hat>,
    /// Latest case arrival used for training; the next arrival gap starts
    /// here.
    pub last_arrival: Option<i64>,
}

fn regressor(schema: Schema, p: HoeffdingBoundParams) -> Hat {
    Hat::regressor(schema, p).expect("validated parameters")
}

fn classifier(p: HoeffdingBoundParams) -> Hat {
    Hat::classifier(Schema::branching(), p).expect("validated parameters")
}

impl PredictiveSet {
    pub fn new(params: HoeffdingBoundParams) -> Result<Self, LearnError> {
        params.validate()?;
        Ok(PredictiveSet {
            params,
            duration: BTreeMap::new(),
            waiting: BTreeMap::new(),
            arrival: regressor(Schema::arrival(), params),
            branching: BTreeMap::new(),
            last_arrival: None,
        })
    }

    /// Adds fresh models for activities, resources and decision points that
    /// have none yet.
    pub fn ensure_models(&mut self, tree: &ProcessTree, d: &DescriptiveSet) {
        let p = self.params;
        for a in tree.alphabet() {
            self.duration.entry(a).or_insert_with(|| regressor(Schema::duration(), p));
        }
        for r in d.pool.resources.keys() {
            self.waiting.entry(r.clone()).or_insert_with(|| regressor(Schema::waiting(), p));
        }
        for dp in tree.decision_points() {
            self.branching.entry(dp.id).or_insert_with(|| classifier(p));
        }
    }

    /// Elements of `(tree, d)` without a model, formatted for reports.
    pub fn missing_keys(&self, tree: &ProcessTree, d: &DescriptiveSet) -> Vec<String> {
        let mut out = Vec::new();
        for a in tree.alphabet() {
            if !self.duration.contains_key(&a) {
                out.push(format!("duration model for `{a}`"));
            }
        }
        for r in d.pool.resources.keys() {
            if !self.waiting.contains_key(r) {
                out.push(format!("waiting model for `{r}`"));
            }
        }
        for dp in tree.decision_points() {
            if !self.branching.contains_key(&dp.id) {
                out.push(format!("branching model for {}", dp.id));
            }
        }
        out
    }

    /// Batch-trained set: every model is induced from its full instance
    /// list at once.
    pub fn fit_batch(instances: &TrainingInstances, tree: &ProcessTree, d: &DescriptiveSet, params: HoeffdingBoundParams) -> Result<Self, LearnError> {
        let mut p = PredictiveSet::new(params)?;
        p.ensure_models(tree, d);
        let mut durations: BTreeMap<&str, Vec<(FeatureVector, Target)>> = BTreeMap::new();
        for (a, x, y) in &instances.duration {
            durations.entry(a).or_default().push((x.clone(), Target::Value(*y)));
        }
        for (a, data) in durations {
            if let Some(m) = p.duration.get_mut(a) {
                *m = fit_batch(Task::Regression, Schema::duration(), params, &data)?;
            }
        }
        let mut waits: BTreeMap<&str, Vec<(FeatureVector, Target)>> = BTreeMap::new();
        for (r, x, y) in &instances.waiting {
            waits.entry(r).or_default().push((x.clone(), Target::Value(*y)));
        }
        for (r, data) in waits {
            if let Some(m) = p.waiting.get_mut(r) {
                *m = fit_batch(Task::Regression, Schema::waiting(), params, &data)?;
            }
        }
        let arrivals: Vec<(FeatureVector, Target)> = instances.arrival.iter().map(|(x, y)| (x.clone(), Target::Value(*y))).collect();
        p.arrival = fit_batch(Task::Regression, Schema::arrival(), params, &arrivals)?;
        let mut branches: BTreeMap<NodeId, Vec<(FeatureVector, Target)>> = BTreeMap::new();
        for (n, x, c) in &instances.branching {
            branches.entry(*n).or_default().push((x.clone(), Target::Class(*c)));
        }
        for (n, data) in branches {
            if let Some(m) = p.branching.get_mut(&n) {
                *m = fit_batch(Task::Classification, Schema::branching(), params, &data)?;
            }
        }
        p.last_arrival = instances.last_arrival;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("predictive set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        serde_json::from_str(s).map_err(|e| LearnError::Checkpoint(e.to_string()))
    }
}

/// Spawns models for new elements of `(tree, d)` and feeds every instance
/// to its model. Instances for elements absent from `(tree, d)` are
/// ignored; existing models are never dropped.
pub fn update_predictive_set(
    p: &PredictiveSet,
    instances: &TrainingInstances,
    tree: &ProcessTree,
    d: &DescriptiveSet,
    params: &HoeffdingBoundParams,
) -> Result<PredictiveSet, LearnError> {
    params.validate()?;
    let mut next = p.clone();
    next.params = *params;
    next.ensure_models(tree, d);
    for (a, x, y) in &instances.duration {
        if let Some(m) = next.duration.get_mut(a) {
            m.learn_one(x, Target::Value(*y))?;
        }
    }
    for (r, x, y) in &instances.waiting {
        if let Some(m) = next.waiting.get_mut(r) {
            m.learn_one(x, Target::Value(*y))?;
        }
    }
    for (x, y) in &instances.arrival {
        next.arrival.learn_one(x, Target::Value(*y))?;
    }
    for (n, x, c) in &instances.branching {
        if let Some(m) = next.branching.get_mut(n) {
            m.learn_one(x, Target::Class(*c))?;
        }
    }
    if instances.last_arrival.is_some() {
        next.last_arrival = instances.last_arrival;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::features::{branching_features, duration_features};
    use crate::stream::Event;

    fn loan() -> ProcessTree {
        ProcessTree::parse("→(request, ×(manual, automated), notify)").unwrap()
    }

    #[test]
    fn new_activity_gets_a_model() {
        let before = loan();
        let d = DescriptiveSet::from_events(&[Event::new("c", "request", "r", 0)]);
        let p = PredictiveSet::new(HoeffdingBoundParams::default()).unwrap();
        let p1 = update_predictive_set(&p, &TrainingInstances::default(), &before, &d, &p.params).unwrap();
        assert!(!p1.duration.contains_key("loan offer"));
        assert!(p1.missing_keys(&before, &d).is_empty());
        let after = ProcessTree::parse("→(request, ×(manual, automated), ×('loan offer', τ), notify)").unwrap();
        let p2 = update_predictive_set(&p1, &TrainingInstances::default(), &after, &d, &p.params).unwrap();
        assert!(p2.duration.contains_key("loan offer"));
        assert_eq!(p2.branching.len(), 2);
        // empty instance set leaves existing models alone
        let p3 = update_predictive_set(&p2, &TrainingInstances::default(), &after, &d, &p.params).unwrap();
        assert_eq!(p3, p2);
    }

    #[test]
    fn repeating_instances_doubles_leaf_counts() {
        let t = loan();
        let d = DescriptiveSet::default();
        let xor = t.decision_points()[0].id;
        let mut inst = TrainingInstances::default();
        for i in 0..40 {
            inst.branching.push((xor, branching_features("request", "r", 1_704_099_600, 0), i % 3 % 2));
            inst.duration.push(("manual".into(), duration_features("ann", 1_704_099_600, 60), 100.0 + i as f64));
        }
        let p0 = PredictiveSet::new(HoeffdingBoundParams::default()).unwrap();
        let p1 = update_predictive_set(&p0, &inst, &t, &d, &p0.params).unwrap();
        let p2 = update_predictive_set(&p1, &inst, &t, &d, &p0.params).unwrap();
        let x = branching_features("request", "r", 1_704_099_600, 0);
        let once = p1.branching[&xor].leaf_counts(&x);
        let twice = p2.branching[&xor].leaf_counts(&x);
        assert_eq!(twice, once.iter().map(|c| 2.0 * c).collect::<Vec<_>>());
        let xd = duration_features("ann", 1_704_099_600, 60);
        assert_eq!(p2.duration["manual"].leaf_weight(&xd), 2.0 * p1.duration["manual"].leaf_weight(&xd));
    }

    #[test]
    fn checkpoint_round_trip() {
        let t = loan();
        let mut p = PredictiveSet::new(HoeffdingBoundParams::default()).unwrap();
        p.ensure_models(&t, &DescriptiveSet::default());
        assert_eq!(PredictiveSet::from_json(&p.to_json()).unwrap(), p);
    }
}
