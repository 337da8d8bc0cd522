//! Control-flow distances between logs.

use std::collections::{BTreeMap, HashMap};

use super::MetricError;

/// Largest side solved exactly; larger instances use greedy matching.
pub const HUNGARIAN_LIMIT: usize = 500;

/// Levenshtein distance divided by the longer length; 0 for two empty traces.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// Minimum-cost assignment of every row to a distinct column
/// (rows <= columns), by shortest augmenting paths with potentials.
/// Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // 1-based with a virtual column 0
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

/// Each row takes its cheapest free column, rows in order.
fn greedy(cost: &[Vec<f64>]) -> Vec<usize> {
    let m = cost.first().map_or(0, Vec::len);
    let mut free = vec![true; m];
    cost.iter()
        .map(|row| {
            let j = (0..m).filter(|&j| free[j]).min_by(|&a, &b| row[a].total_cmp(&row[b])).expect("enough columns");
            free[j] = false;
            j
        })
        .collect()
}

/// Mean normalized edit distance under the best one-to-one matching of
/// traces; surplus traces of the larger log are matched with the empty
/// trace. The flag is set when the greedy fallback was used.
pub fn cfld<S: AsRef<str>>(real: &[Vec<S>], sim: &[Vec<S>]) -> Result<(f64, bool), MetricError> {
    if real.is_empty() || sim.is_empty() {
        return Err(MetricError::EmptyLog);
    }
    let (small, large) = if real.len() <= sim.len() { (real, sim) } else { (sim, real) };
    // distances are computed once per pair of distinct variants
    let mut variants: HashMap<Vec<&str>, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(small.len());
    let mut cols = Vec::with_capacity(large.len());
    for (log, ids) in [(small, &mut rows), (large, &mut cols)] {
        for t in log {
            let key: Vec<&str> = t.iter().map(AsRef::as_ref).collect();
            let next = variants.len();
            ids.push(*variants.entry(key).or_insert(next));
        }
    }
    let mut by_id: Vec<Vec<&str>> = vec![Vec::new(); variants.len()];
    for (v, id) in variants {
        by_id[id] = v;
    }
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&a| cols.iter().map(|&b| *memo.entry((a, b)).or_insert_with(|| normalized_edit_distance(&by_id[a], &by_id[b]))).collect())
        .collect();
    let approximate = large.len() > HUNGARIAN_LIMIT;
    let assignment = if approximate { greedy(&cost) } else { hungarian(&cost) };
    let mut matched = vec![false; large.len()];
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        matched[j] = true;
        total += cost[i][j];
    }
    // surplus traces against the empty trace
    total += large.iter().zip(&matched).filter(|(t, m)| !**m && !t.is_empty()).count() as f64;
    Ok((total / large.len() as f64, approximate))
}

const START: &str = "\u{25b7}";
const END: &str = "\u{25a1}";

fn trigram_shares<S: AsRef<str>>(log: &[Vec<S>]) -> BTreeMap<[String; 3], f64> {
    let mut counts: BTreeMap<[String; 3], f64> = BTreeMap::new();
    for t in log {
        let padded: Vec<&str> = [START, START].into_iter().chain(t.iter().map(AsRef::as_ref)).chain([END, END]).collect();
        for w in padded.windows(3) {
            *counts.entry([w[0].to_string(), w[1].to_string(), w[2].to_string()]).or_default() += 1.0;
        }
    }
    let total: f64 = counts.values().sum();
    counts.values_mut().for_each(|c| *c /= total);
    counts
}

/// Sum of absolute differences of 3-gram shares over the sum of shares,
/// with traces padded by two start and two end markers.
pub fn three_gram_distance<S: AsRef<str>>(real: &[Vec<S>], sim: &[Vec<S>]) -> Result<f64, MetricError> {
    if real.is_empty() || sim.is_empty() {
        return Err(MetricError::EmptyLog);
    }
    let (a, b) = (trigram_shares(real), trigram_shares(sim));
    let mut diff = 0.0;
    for (g, x) in &a {
        diff += (x - b.get(g).copied().unwrap_or(0.0)).abs();
    }
    for (g, y) in &b {
        if !a.contains_key(g) {
            diff += y;
        }
    }
    Ok(diff / 2.0)
}
