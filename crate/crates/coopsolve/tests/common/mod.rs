//! Shared fixtures for the integration suites: a tiny reference instance
//! and a seeded generator of small random problems with integer costs.

#![allow(dead_code)]

use std::collections::BTreeSet;

use coopsolve::model::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two binary variables, unaries (1,0) and (0,2), one mismatch constraint
/// of weight 2 owned by the first variable. Optimum (0,0) with energy 1.
pub fn p2() -> Problem {
    Problem::new(
        vec![vec![0, 1], vec![0, 1]],
        vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        vec![((0, 1), vec![0.0, 2.0, 2.0, 0.0])],
    )
    .unwrap()
}

/// A connected random instance: 2..=6 variables, 2..=4 labels each,
/// integer costs drawn from 0..=9, a random spanning tree plus extra
/// edges. Deterministic in `seed`, so every suite sees the same corpus.
pub fn random_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6usize);
    let domains: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..rng.gen_range(2..=4i64)).collect())
        .collect();
    let unary: Vec<Vec<f64>> = domains
        .iter()
        .map(|d| (0..d.len()).map(|_| rng.gen_range(0..=9) as f64).collect())
        .collect();

    // Spanning tree over a shuffled order keeps the constraint graph
    // connected; a sprinkle of extra edges varies the density.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 1..n {
        let j = order[rng.gen_range(0..i)];
        let (a, b) = (order[i].min(j), order[i].max(j));
        edges.insert((a, b));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.3) {
                edges.insert((a, b));
            }
        }
    }

    let pairwise: Vec<((usize, usize), Vec<f64>)> = edges
        .into_iter()
        .map(|(a, b)| {
            let table: Vec<f64> = (0..domains[a].len() * domains[b].len())
                .map(|_| rng.gen_range(0..=9) as f64)
                .collect();
            ((a, b), table)
        })
        .collect();

    Problem::new(domains, unary, pairwise).unwrap()
}

/// `count` instances seeded from `base`.
pub fn corpus(base: u64, count: usize) -> Vec<Problem> {
    (0..count as u64).map(|t| random_problem(base + t)).collect()
}
