use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::semantics::{CaseRuntime, Compiled, Step};
use super::ProcessTree;

const REDO_PROBABILITY: f64 = 0.3;
const MAX_REDOS_PER_LOOP: u32 = 8;

/// Draws `n` traces from the tree's language. Choices are uniform, loops
/// repeat with probability 0.3 and at most 8 times, and interleavings of
/// parallel branches are uniform over enabled leaves.
pub fn language_sample(tree: &ProcessTree, n: usize, seed: u64) -> Vec<Vec<String>> {
    let net = Arc::new(Compiled::new(tree));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_one(&net, &mut rng)).collect()
}

fn sample_one(net: &Arc<Compiled>, rng: &mut impl Rng) -> Vec<String> {
    let mut rt = CaseRuntime::from_compiled(net.clone());
    let mut redos: HashMap<u32, u32> = HashMap::new();
    let mut out = Vec::new();
    while !rt.is_final() {
        let steps = rt.enabled();
        // one candidate per independent decision: leaves, xor nodes, loops
        let mut groups: Vec<u32> = steps
            .iter()
            .map(|s| match *s {
                Step::Fire(i) | Step::Choose(i, _) | Step::Exit(i) | Step::Redo(i) => i,
            })
            .collect();
        groups.dedup();
        let node = groups[rng.random_range(0..groups.len())];
        let options: Vec<Step> = steps
            .iter()
            .copied()
            .filter(|s| matches!(*s, Step::Fire(i) | Step::Choose(i, _) | Step::Exit(i) | Step::Redo(i) if i == node))
            .collect();
        let step = match options[0] {
            Step::Exit(_) => {
                let count = redos.entry(node).or_default();
                if *count < MAX_REDOS_PER_LOOP && rng.random_bool(REDO_PROBABILITY) {
                    *count += 1;
                    Step::Redo(node)
                } else {
                    Step::Exit(node)
                }
            }
            _ => options[rng.random_range(0..options.len())],
        };
        if let Step::Fire(i) = step {
            if let Some(l) = rt.label(i) {
                out.push(l.to_string());
            }
        }
        rt.apply(step);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::FragmentKind;
    use crate::tree::fits;

    #[test]
    fn sequence_is_deterministic() {
        let t = ProcessTree::parse("→(a, b)").unwrap();
        assert!(language_sample(&t, 20, 1).iter().all(|s| s == &["a", "b"]));
    }

    #[test]
    fn xor_yields_both() {
        let t = ProcessTree::parse("×(a, b)").unwrap();
        let s = language_sample(&t, 100, 7);
        assert!(s.iter().any(|x| x == &["a"]) && s.iter().any(|x| x == &["b"]));
    }

    #[test]
    fn flower_samples_replay() {
        let t = ProcessTree::parse("⟲(τ, ×(a, b))").unwrap();
        for s in language_sample(&t, 200, 3) {
            assert!(fits(&t, &s, FragmentKind::Complete).unwrap(), "{s:?}");
        }
    }
}
