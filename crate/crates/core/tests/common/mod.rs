//! Helpers shared by integration tests.

use conformal_kit::cluster::Hierarchy;
use conformal_kit::SeededRng;

/// Random laminar family on `n` classes: each set is split into 2 or 3
/// random parts, and parts keep splitting with probability 0.7.
pub fn random_hierarchy(n: usize, seed: u64) -> Hierarchy {
    fn split(set: Vec<usize>, rng: &mut SeededRng, out: &mut Vec<Vec<usize>>) {
        if set.len() < 2 {
            return;
        }
        let parts = 2 + rng.index(2).min(set.len() - 2);
        let mut groups = vec![Vec::new(); parts];
        let mut shuffled = set.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.index(i + 1));
        }
        for (i, c) in shuffled.into_iter().enumerate() {
            groups[if i < parts { i } else { rng.index(parts) }].push(c);
        }
        for g in groups {
            if g.len() < set.len() && !out.contains(&g) {
                out.push(g.clone());
            }
            if rng.uniform() < 0.7 {
                split(g, rng, out);
            }
        }
    }
    let mut rng = SeededRng::new(seed);
    let mut sets = vec![(0..n).collect::<Vec<_>>()];
    split((0..n).collect(), &mut rng, &mut sets);
    for s in &mut sets {
        s.sort_unstable();
    }
    Hierarchy::from_sets(n, &sets).expect("laminar by construction")
}

/// Exhaustive minimum number of disjoint nodes whose union is `target`.
pub fn brute_force_cover(h: &Hierarchy, target: u32) -> Option<usize> {
    let masks: Vec<u32> = (0..h.n_nodes())
        .map(|i| h.members(i).iter().fold(0u32, |m, &c| m | (1 << c)))
        .collect();
    let mut best = vec![None; 1 << h.n_classes()];
    best[0] = Some(0usize);
    for s in 1u32..(1 << h.n_classes()) {
        let low = s & s.wrapping_neg();
        best[s as usize] = masks
            .iter()
            .filter(|&&m| m & low != 0 && m & !s == 0)
            .filter_map(|&m| best[(s & !m) as usize].map(|b| b + 1))
            .min();
    }
    best[target as usize]
}
