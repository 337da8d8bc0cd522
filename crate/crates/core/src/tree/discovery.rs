//! Inductive Miner, infrequent variant: recursive cut detection on the
//! directly-follows graph with frequency filtering as a second attempt.

use std::collections::{BTreeMap, BTreeSet};

use super::{Operator, ProcessTree, Shape, TreeError};

pub const DEFAULT_NOISE_THRESHOLD: f64 = 0.2;

type Variants = BTreeMap<Vec<u32>, u64>;

/// Directly-follows graph over activity indices.
#[derive(Debug, Clone, Default)]
pub(crate) struct Dfg {
    pub activities: BTreeSet<u32>,
    pub edges: BTreeMap<(u32, u32), u64>,
    pub starts: BTreeMap<u32, u64>,
    pub ends: BTreeMap<u32, u64>,
}

impl Dfg {
    fn from_log(log: &Variants) -> Self {
        let mut g = Dfg::default();
        for (trace, &n) in log {
            if trace.is_empty() {
                continue;
            }
            g.activities.extend(trace.iter().copied());
            *g.starts.entry(trace[0]).or_default() += n;
            *g.ends.entry(*trace.last().unwrap()).or_default() += n;
            for w in trace.windows(2) {
                *g.edges.entry((w[0], w[1])).or_default() += n;
            }
        }
        g
    }

    /// Keeps edges carrying at least `noise` times the heaviest outgoing
    /// edge of their source; start/end activities are filtered alike.
    fn filtered(&self, noise: f64) -> Self {
        let mut max_out: BTreeMap<u32, u64> = BTreeMap::new();
        for (&(a, _), &w) in &self.edges {
            let m = max_out.entry(a).or_default();
            *m = (*m).max(w);
        }
        let keep_rel = |w: u64, max: u64| w as f64 >= noise * max as f64;
        let max_start = self.starts.values().copied().max().unwrap_or(0);
        let max_end = self.ends.values().copied().max().unwrap_or(0);
        Dfg {
            activities: self.activities.clone(),
            edges: self.edges.iter().filter(|(&(a, _), &w)| keep_rel(w, max_out[&a])).map(|(k, v)| (*k, *v)).collect(),
            starts: self.starts.iter().filter(|(_, &w)| keep_rel(w, max_start)).map(|(k, v)| (*k, *v)).collect(),
            ends: self.ends.iter().filter(|(_, &w)| keep_rel(w, max_end)).map(|(k, v)| (*k, *v)).collect(),
        }
    }

    fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains_key(&(a, b))
    }

    fn reachability(&self) -> BTreeMap<u32, BTreeSet<u32>> {
        let mut succ: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &(a, b) in self.edges.keys() {
            succ.entry(a).or_default().push(b);
        }
        self.activities
            .iter()
            .map(|&a| {
                let mut seen = BTreeSet::new();
                let mut stack: Vec<u32> = succ.get(&a).cloned().unwrap_or_default();
                while let Some(x) = stack.pop() {
                    if seen.insert(x) {
                        stack.extend(succ.get(&x).into_iter().flatten().copied());
                    }
                }
                (a, seen)
            })
            .collect()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        self.0[x] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Groups in order of their smallest member.
    fn groups(&mut self, items: &[u32]) -> Vec<BTreeSet<u32>> {
        let mut by_root: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for i in 0..items.len() {
            let r = self.find(i);
            by_root.entry(r).or_default().insert(items[i]);
        }
        by_root.into_values().collect()
    }
}

fn components(acts: &[u32], connected: impl Fn(u32, u32) -> bool) -> Vec<BTreeSet<u32>> {
    let mut uf = UnionFind::new(acts.len());
    for i in 0..acts.len() {
        for j in i + 1..acts.len() {
            if connected(acts[i], acts[j]) {
                uf.union(i, j);
            }
        }
    }
    uf.groups(acts)
}

#[derive(Debug)]
enum Cut {
    Xor(Vec<BTreeSet<u32>>),
    Seq(Vec<BTreeSet<u32>>),
    And(Vec<BTreeSet<u32>>),
    /// Body activities; everything else is redo.
    Loop(BTreeSet<u32>),
}

fn xor_cut(g: &Dfg, acts: &[u32]) -> Option<Cut> {
    let comps = components(acts, |a, b| g.has_edge(a, b) || g.has_edge(b, a));
    (comps.len() > 1).then_some(Cut::Xor(comps))
}

fn seq_cut(g: &Dfg, acts: &[u32]) -> Option<Cut> {
    let reach = g.reachability();
    let r = |a: u32, b: u32| reach[&a].contains(&b);
    // same group: mutually reachable or mutually unreachable
    let groups = components(acts, |a, b| r(a, b) == r(b, a));
    if groups.len() < 2 {
        return None;
    }
    let mut groups = groups;
    groups.sort_by(|x, y| {
        let (a, b) = (*x.first().unwrap(), *y.first().unwrap());
        if r(a, b) {
            std::cmp::Ordering::Less
        } else if r(b, a) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            for &a in &groups[i] {
                for &b in &groups[j] {
                    if !r(a, b) || r(b, a) {
                        return None;
                    }
                }
            }
        }
    }
    Some(Cut::Seq(groups))
}

fn and_cut(g: &Dfg, acts: &[u32]) -> Option<Cut> {
    let groups = components(acts, |a, b| !(g.has_edge(a, b) && g.has_edge(b, a)));
    if groups.len() < 2 {
        return None;
    }
    let complete = |s: &BTreeSet<u32>| s.iter().any(|a| g.starts.contains_key(a)) && s.iter().any(|a| g.ends.contains_key(a));
    let (mut good, bad): (Vec<_>, Vec<_>) = groups.into_iter().partition(complete);
    if good.is_empty() {
        return None;
    }
    for b in bad {
        good[0].extend(b);
    }
    (good.len() > 1).then_some(Cut::And(good))
}

fn loop_cut(g: &Dfg, acts: &[u32]) -> Option<Cut> {
    let mut body: BTreeSet<u32> = g.starts.keys().chain(g.ends.keys()).copied().collect();
    let rest: Vec<u32> = acts.iter().copied().filter(|a| !body.contains(a)).collect();
    if rest.is_empty() {
        return None;
    }
    let comps = components(&rest, |a, b| g.has_edge(a, b) || g.has_edge(b, a));
    let starts: Vec<u32> = g.starts.keys().copied().collect();
    let ends: Vec<u32> = g.ends.keys().copied().collect();
    let mut redo = BTreeSet::new();
    for c in comps {
        let mut is_redo = true;
        let mut from_end = false;
        let mut to_start = false;
        for &x in &c {
            for &b in &body {
                if g.has_edge(b, x) {
                    if !ends.contains(&b) {
                        is_redo = false;
                    }
                    from_end = true;
                }
                if g.has_edge(x, b) {
                    if !starts.contains(&b) {
                        is_redo = false;
                    }
                    to_start = true;
                }
            }
            if ends.iter().any(|&e| g.has_edge(e, x)) && !ends.iter().all(|&e| g.has_edge(e, x)) {
                is_redo = false;
            }
            if starts.iter().any(|&s| g.has_edge(x, s)) && !starts.iter().all(|&s| g.has_edge(x, s)) {
                is_redo = false;
            }
        }
        if is_redo && from_end && to_start {
            redo.extend(c);
        } else {
            body.extend(c);
        }
    }
    (!redo.is_empty()).then_some(Cut::Loop(body))
}

fn find_cut(g: &Dfg) -> Option<Cut> {
    let acts: Vec<u32> = g.activities.iter().copied().collect();
    xor_cut(g, &acts).or_else(|| seq_cut(g, &acts)).or_else(|| and_cut(g, &acts)).or_else(|| loop_cut(g, &acts))
}

fn add(log: &mut Variants, trace: Vec<u32>, n: u64) {
    *log.entry(trace).or_default() += n;
}

fn split(log: &Variants, cut: &Cut) -> (Operator, Vec<Variants>) {
    match cut {
        Cut::Xor(groups) => {
            let mut subs = vec![Variants::new(); groups.len()];
            for (trace, &n) in log {
                // majority group; events of other groups are dropped
                let k = (0..groups.len())
                    .max_by_key(|&k| (trace.iter().filter(|a| groups[k].contains(a)).count(), std::cmp::Reverse(k)))
                    .unwrap();
                add(&mut subs[k], trace.iter().copied().filter(|a| groups[k].contains(a)).collect(), n);
            }
            (Operator::Xor, subs)
        }
        Cut::Seq(groups) => {
            let mut subs = vec![Variants::new(); groups.len()];
            for (trace, &n) in log {
                let assign = monotone_assignment(trace, groups);
                for (k, sub) in subs.iter_mut().enumerate() {
                    let part = trace.iter().zip(&assign).filter(|(a, &g)| g == k && groups[k].contains(a)).map(|(a, _)| *a).collect();
                    add(sub, part, n);
                }
            }
            (Operator::Sequence, subs)
        }
        Cut::And(groups) => {
            let mut subs = vec![Variants::new(); groups.len()];
            for (trace, &n) in log {
                for (k, sub) in subs.iter_mut().enumerate() {
                    add(sub, trace.iter().copied().filter(|a| groups[k].contains(a)).collect(), n);
                }
            }
            (Operator::And, subs)
        }
        Cut::Loop(body) => {
            let mut subs = vec![Variants::new(), Variants::new()];
            for (trace, &n) in log {
                let mut part = Vec::new();
                let mut in_body = true;
                for &a in trace {
                    let now_body = body.contains(&a);
                    if now_body != in_body {
                        add(&mut subs[usize::from(!in_body)], std::mem::take(&mut part), n);
                        in_body = now_body;
                    }
                    part.push(a);
                }
                add(&mut subs[usize::from(!in_body)], part, n);
                if !in_body {
                    // the loop must leave through its body
                    add(&mut subs[0], Vec::new(), n);
                }
            }
            (Operator::Loop, subs)
        }
    }
}

/// Assigns each event to a group index, nondecreasing along the trace,
/// minimizing events placed outside their own group.
fn monotone_assignment(trace: &[u32], groups: &[BTreeSet<u32>]) -> Vec<usize> {
    let k = groups.len();
    let n = trace.len();
    let mut cost = vec![vec![0u32; k]; n + 1];
    let mut from = vec![vec![0usize; k]; n + 1];
    for i in 1..=n {
        let mut best = (u32::MAX, 0);
        for g in 0..k {
            if cost[i - 1][g] < best.0 {
                best = (cost[i - 1][g], g);
            }
            cost[i][g] = best.0 + u32::from(!groups[g].contains(&trace[i - 1]));
            from[i][g] = best.1;
        }
    }
    let mut g = (0..k).min_by_key(|&g| (cost[n][g], g)).unwrap_or(0);
    let mut out = vec![0; n];
    for i in (1..=n).rev() {
        out[i - 1] = g;
        g = from[i][g];
    }
    out
}

/// Splits traces wherever an end activity is directly followed by a start
/// activity, for a `⟲(·, τ)` fall-through.
fn tau_loop_split(log: &Variants, g: &Dfg) -> Option<Variants> {
    let mut out = Variants::new();
    let mut split_any = false;
    for (trace, &n) in log {
        let mut part = Vec::new();
        for (i, &a) in trace.iter().enumerate() {
            part.push(a);
            if i + 1 < trace.len() && g.ends.contains_key(&a) && g.starts.contains_key(&trace[i + 1]) {
                add(&mut out, std::mem::take(&mut part), n);
                split_any = true;
            }
        }
        add(&mut out, part, n);
    }
    split_any.then_some(out)
}

fn mine(log: &Variants, noise: f64, names: &[String], allow_tau_loop: bool) -> Shape {
    let total: u64 = log.values().sum();
    let empty = log.get(&Vec::new()).copied().unwrap_or(0);
    if total == 0 || empty == total {
        return Shape::Tau;
    }
    if empty > 0 {
        let mut rest = log.clone();
        rest.remove(&Vec::new());
        let inner = mine(&rest, noise, names, true);
        if (empty as f64) < noise * total as f64 {
            return inner;
        }
        return Shape::xor(vec![Shape::Tau, inner]);
    }

    let g = Dfg::from_log(log);
    if g.activities.len() == 1 {
        let a = Shape::Activity(names[*g.activities.first().unwrap() as usize].clone());
        return if log.keys().all(|t| t.len() == 1) { a } else { Shape::looped(a, Shape::Tau) };
    }

    let cut = find_cut(&g).or_else(|| if noise > 0.0 { find_cut(&g.filtered(noise)) } else { None });
    if let Some(cut) = cut {
        let (op, subs) = split(log, &cut);
        return Shape::Op(op, subs.iter().map(|s| mine(s, noise, names, true)).collect());
    }
    if allow_tau_loop {
        if let Some(parts) = tau_loop_split(log, &g) {
            return Shape::looped(mine(&parts, noise, names, false), Shape::Tau);
        }
    }
    let flower = g.activities.iter().map(|&a| Shape::Activity(names[a as usize].clone())).collect();
    Shape::looped(Shape::Tau, Shape::xor(flower))
}

/// Discovers a tree from complete traces. With `noise_threshold = 0` every
/// input trace fits the result.
pub fn discover_initial_tree<S: AsRef<str>>(traces: &[Vec<S>], noise_threshold: f64) -> Result<ProcessTree, TreeError> {
    if traces.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut names: Vec<String> = traces.iter().flatten().map(|a| a.as_ref().to_string()).collect();
    names.sort();
    names.dedup();
    let index: BTreeMap<&str, u32> = names.iter().enumerate().map(|(i, a)| (a.as_str(), i as u32)).collect();
    let mut log = Variants::new();
    for t in traces {
        add(&mut log, t.iter().map(|a| index[a.as_ref()]).collect(), 1);
    }
    let noise = noise_threshold.clamp(0.0, 0.999);
    Ok(ProcessTree::from_shape(mine(&log, noise, &names, true)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::FragmentKind;
    use crate::tree::{fits, language_sample};

    fn traces(spec: &[(&str, usize)]) -> Vec<Vec<String>> {
        spec.iter()
            .flat_map(|(t, n)| std::iter::repeat_n(t.split_whitespace().map(str::to_string).collect::<Vec<_>>(), *n))
            .collect()
    }

    fn discover(spec: &[(&str, usize)], noise: f64) -> String {
        discover_initial_tree(&traces(spec), noise).unwrap().to_string()
    }

    #[test]
    fn basic_cuts() {
        assert_eq!(discover(&[("a b", 10)], 0.2), "→(a, b)");
        assert_eq!(discover(&[("a", 5), ("b", 5)], 0.2), "×(a, b)");
        assert_eq!(discover(&[("a b c", 3), ("b a c", 3)], 0.0), "→(∧(a, b), c)");
        assert_eq!(discover(&[("a b a b a", 2), ("a", 2)], 0.0), "⟲(a, b)");
        assert_eq!(discover(&[("a a a", 2), ("a", 1)], 0.0), "⟲(a, τ)");
        assert_eq!(discover(&[("a", 5), ("", 5)], 0.2), "×(τ, a)");
    }

    #[test]
    fn loan_model() {
        let t = discover(&[("request manual notify", 5), ("request automated notify", 5)], 0.2);
        assert_eq!(t, "→(request, ×(automated, manual), notify)");
    }

    #[test]
    fn infrequent_edges_are_filtered() {
        let mut log = Variants::new();
        add(&mut log, vec![0, 1, 2], 100);
        add(&mut log, vec![0, 2, 1], 2);
        let g = Dfg::from_log(&log).filtered(0.2);
        assert!(g.has_edge(1, 2) && !g.has_edge(0, 2));
        // relative to its source: c has no heavier outgoing edge
        assert!(g.has_edge(2, 1));
        assert_eq!(g.ends.keys().copied().collect::<Vec<_>>(), vec![2]);
        // an unfiltered cut is preferred when one exists
        assert_eq!(discover(&[("a b c", 100), ("a c b", 2)], 0.2), "→(a, ∧(b, c))");
    }

    #[test]
    fn empty_input_errors() {
        let none: Vec<Vec<String>> = vec![];
        assert_eq!(discover_initial_tree(&none, 0.2), Err(TreeError::EmptyInput));
    }

    #[test]
    fn zero_noise_fits_samples_of_random_trees() {
        let models = ["→(a, ×(b, c), ∧(d, e))", "⟲(→(a, b), c)", "∧(⟲(a, b), ×(c, τ), d)", "→(×(a, τ), ⟲(b, ×(c, d)), e)"];
        for (i, m) in models.iter().enumerate() {
            let src = ProcessTree::parse(m).unwrap();
            let log = language_sample(&src, 60, i as u64);
            let found = discover_initial_tree(&log, 0.0).unwrap();
            for t in &log {
                assert!(fits(&found, t, FragmentKind::Complete).unwrap(), "{t:?} on {found} from {m}");
            }
        }
    }
}
