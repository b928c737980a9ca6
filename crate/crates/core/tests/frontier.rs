use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use treecrawl_core::frontier::FlatFrontier;
use treecrawl_core::{Error, FrontierEntry, QFunction, SelectMode, StateActionVector, TreeFrontier};

/// Linear scorer with fixed weights.
struct Linear([f64; 8]);

impl QFunction for Linear {
    fn q(&self, x: &StateActionVector) -> f64 {
        x.as_slice().iter().zip(&self.0).map(|(a, w)| a * w).sum()
    }
}

fn vec8(v: [f64; 8]) -> StateActionVector {
    StateActionVector::new(&v).unwrap()
}

fn entry(x: StateActionVector, url: &str) -> FrontierEntry {
    FrontierEntry::new(x, url, "http://parent.test/", "", 0)
}

/// Features on a coarse grid so that ties and equal thresholds occur.
fn grid_vec() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(0u8..5).prop_map(|a| a.map(|v| f64::from(v) / 4.0))
}

/// Upper critical value of the chi-square statistic at significance 1e-4.
fn chi_square_critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - 1e-4)
}

fn chi_square(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

fn satisfies(x: &StateActionVector, path: &[(usize, f64, bool)]) -> bool {
    path.iter().all(|&(f, c, left)| (x.get(f) < c) == left)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_invariants_hold_under_random_insertions(
        samples in prop::collection::vec((grid_vec(), 0u8..2), 1..300),
        entries in prop::collection::vec(grid_vec(), 0..200),
    ) {
        let mut tree = TreeFrontier::new();
        let mut splits = 0;
        for (i, (v, r)) in samples.iter().enumerate() {
            if tree.insert_experience(vec8(*v), *r).is_some() {
                splits += 1;
            }
            prop_assert!(tree.leaf_count() <= i + 2);
        }
        prop_assert_eq!(tree.leaf_count(), splits + 1);
        for (i, v) in entries.iter().enumerate() {
            tree.insert_frontier(entry(vec8(*v), &format!("http://e.test/{i}")));
        }

        let leaves = tree.leaf_ids();
        prop_assert_eq!(leaves.len(), tree.leaf_count());
        let mut experience = 0;
        let mut frontier = 0;
        for id in leaves {
            let path = tree.path_to(id).expect("leaf is reachable");
            for (x, _) in tree.leaf_experience(id) {
                prop_assert!(satisfies(x, &path));
            }
            for e in tree.leaf_frontier(id) {
                prop_assert!(satisfies(&e.x, &path));
                prop_assert_eq!(tree.route(&e.x), id);
            }
            experience += tree.leaf_experience(id).len();
            frontier += tree.leaf_frontier(id).len();
        }
        prop_assert_eq!(experience, samples.len());
        prop_assert_eq!(frontier, entries.len());
        prop_assert_eq!(tree.frontier_size(), entries.len());
    }

    #[test]
    fn selection_conserves_the_frontier(
        samples in prop::collection::vec((grid_vec(), 0u8..2), 0..60),
        entries in prop::collection::vec(grid_vec(), 1..80),
        seed in any::<u64>(),
        greedy in any::<bool>(),
    ) {
        let mut tree = TreeFrontier::new();
        for (v, r) in &samples {
            tree.insert_experience(vec8(*v), *r);
        }
        for (i, v) in entries.iter().enumerate() {
            tree.insert_frontier(entry(vec8(*v), &format!("http://e.test/{i}")));
        }
        let mode = if greedy { SelectMode::Greedy } else { SelectMode::Explore };
        let q = Linear([0.3, -0.2, 0.5, 0.1, 0.9, -0.4, 0.2, 0.05]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        for k in 0..entries.len() {
            let sel = tree.select(mode, &q, &mut rng, |_| true).unwrap();
            prop_assert_eq!(sel.frontier_size, entries.len() - k);
            prop_assert_eq!(tree.frontier_size(), entries.len() - k - 1);
            prop_assert!(seen.insert(sel.entry.url));
        }
        prop_assert!(matches!(
            tree.select(mode, &q, &mut rng, |_| true),
            Err(Error::FrontierExhausted)
        ));
    }

    #[test]
    fn tree_matches_synchronous_when_leaves_hold_one_entry(
        samples in prop::collection::vec((prop::array::uniform8(0.0f64..1.0), 0u8..2), 2..80),
        entries in prop::collection::vec(prop::array::uniform8(0.0f64..1.0), 1..120),
        weights in prop::array::uniform8(-1.0f64..1.0),
    ) {
        let mut tree = TreeFrontier::new();
        for (v, r) in &samples {
            tree.insert_experience(vec8(*v), *r);
        }
        for (i, v) in entries.iter().enumerate() {
            tree.insert_frontier(entry(vec8(*v), &format!("http://e.test/{i}")));
        }
        let keep: HashSet<String> = tree
            .leaf_ids()
            .into_iter()
            .filter_map(|id| tree.leaf_frontier(id).first().map(|e| e.url.clone()))
            .collect();
        tree.purge(|e| keep.contains(&e.url));

        let q = Linear(weights);
        let mut a = tree.clone();
        let mut b = tree;
        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(2);
        loop {
            let sa = a.select(SelectMode::Greedy, &q, &mut rng_a, |_| true);
            let sb = b.select_synchronous(SelectMode::Greedy, &q, &mut rng_b, |_| true);
            match (sa, sb) {
                (Ok(sa), Ok(sb)) => {
                    prop_assert_eq!(&sa.entry.url, &sb.entry.url);
                    prop_assert_eq!(sa.q_evals, sb.q_evals);
                }
                (Err(Error::FrontierExhausted), Err(Error::FrontierExhausted)) => break,
                other => prop_assert!(false, "diverged: {:?}", other),
            }
        }
    }
}

#[test]
fn representatives_are_uniform_within_a_leaf() {
    let mut tree = TreeFrontier::new();
    for (i, url) in ["a", "b", "c", "d"].iter().enumerate() {
        tree.insert_frontier(entry(vec8([i as f64; 8]), url));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        let reps = tree.sample_representatives(&mut rng, |_| true);
        assert_eq!(reps.len(), 1);
        counts[reps[0].1] += 1;
    }
    for &c in &counts {
        assert!((c as f64 / draws as f64 - 0.25).abs() < 0.02, "{counts:?}");
    }
    assert!(chi_square(&counts) < chi_square_critical(3), "{counts:?}");
}

#[test]
fn explore_is_uniform_over_leaves_not_entries() {
    let mut tree = TreeFrontier::new();
    let lo = [0.0; 8];
    let mut hi = [0.0; 8];
    hi[0] = 1.0;
    tree.insert_experience(vec8(lo), 0);
    tree.insert_experience(vec8(hi), 1);
    assert_eq!(tree.leaf_count(), 2);
    tree.insert_frontier(entry(vec8(lo), "http://left.test/"));
    for i in 0..9 {
        tree.insert_frontier(entry(vec8(hi), &format!("http://right.test/{i}")));
    }
    let q = Linear([0.0; 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 20_000;
    let mut left = 0;
    for _ in 0..trials {
        let mut t = tree.clone();
        let sel = t.select(SelectMode::Explore, &q, &mut rng, |_| true).unwrap();
        assert_eq!(sel.q_evals, 0);
        left += usize::from(sel.entry.url.contains("left"));
    }
    let counts = [left, trials - left];
    assert!(chi_square(&counts) < chi_square_critical(1), "{counts:?}");
}

#[test]
fn single_leaf_tree_selection_is_uniform_like_flat_random() {
    let n = 5;
    let trials = 50_000;
    let q = Linear([0.0; 8]);
    let mut tree = TreeFrontier::new();
    let mut flat = FlatFrontier::new();
    for i in 0..n {
        let e = entry(vec8([0.1 * i as f64; 8]), &format!("http://e.test/{i}"));
        tree.insert_frontier(e.clone());
        flat.push(e);
    }
    let index: HashMap<String, usize> = (0..n).map(|i| (format!("http://e.test/{i}"), i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut tree_counts, mut flat_counts) = (vec![0usize; n], vec![0usize; n]);
    for _ in 0..trials {
        let sel = tree.clone().select(SelectMode::Explore, &q, &mut rng, |_| true).unwrap();
        tree_counts[index[&sel.entry.url]] += 1;
        let e = flat.clone().select(&mut rng, |_| true).unwrap();
        flat_counts[index[&e.url]] += 1;
    }
    let critical = chi_square_critical(n - 1);
    assert!(chi_square(&tree_counts) < critical, "{tree_counts:?}");
    assert!(chi_square(&flat_counts) < critical, "{flat_counts:?}");
}

#[test]
fn a_thousand_insertions_stay_within_the_leaf_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tree = TreeFrontier::new();
    for _ in 0..1000 {
        let v: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let r = u8::from(v[0] + 0.3 * v[1] > 0.7);
        tree.insert_experience(vec8(v), r);
    }
    assert!(tree.leaf_count() <= 1001);
    assert!(tree.leaf_count() > 1);
    for _ in 0..500 {
        let v: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let x = vec8(v);
        let path = tree.path_to(tree.route(&x)).unwrap();
        assert!(satisfies(&x, &path));
    }
}
