//! Variance-reduction split search over a leaf's experience samples.

use serde::{Deserialize, Serialize};

use crate::graph::StateActionVector;

/// Gains at or below this are treated as zero, and candidates must beat the
/// incumbent by more than this to replace it.
pub const VR_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub vr: f64,
}

/// Population variance of binary rewards from their count and sum.
fn variance(n: f64, sum: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let mean = sum / n;
    (mean - mean * mean).max(0.0)
}

/// Midpoint strictly above `lo` and at most `hi`, so `lo` routes left and `hi` right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let c = lo + (hi - lo) / 2.0;
    if c > lo {
        c
    } else {
        hi
    }
}

/// The best split of `samples` under the rule `x[f] < c` left, `x[f] >= c`
/// right. Features are scanned in index order and thresholds in ascending
/// order; a later candidate replaces the incumbent only if it improves the
/// reduction by more than [`VR_EPSILON`]. `None` when fewer than two samples,
/// zero variance, or no positive reduction.
pub fn best_split(samples: &[(StateActionVector, u8)]) -> Option<Split> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let total: f64 = samples.iter().map(|(_, r)| f64::from(*r)).sum();
    let parent_var = variance(nf, total);
    if parent_var <= 0.0 {
        return None;
    }
    let dim = samples[0].0.len();
    let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut best: Option<Split> = None;
    for feature in 0..dim {
        order.clear();
        order.extend(samples.iter().map(|(x, r)| (x.get(feature), f64::from(*r))));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_n = 0.0;
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_n += 1.0;
            left_sum += order[i].1;
            let (lo, hi) = (order[i].0, order[i + 1].0);
            if lo == hi {
                continue;
            }
            let right_n = nf - left_n;
            let right_sum = total - left_sum;
            let vr = parent_var
                - left_n / nf * variance(left_n, left_sum)
                - right_n / nf * variance(right_n, right_sum);
            if best.map_or(vr > VR_EPSILON, |b| vr > b.vr + VR_EPSILON) {
                best = Some(Split {
                    feature,
                    threshold: midpoint(lo, hi),
                    vr,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: f64, r: u8) -> (StateActionVector, u8) {
        (StateActionVector::new(&[v, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), r)
    }

    #[test]
    fn four_sample_fixture() {
        let s = vec![sample(0.1, 0), sample(0.2, 0), sample(0.8, 1), sample(0.9, 1)];
        let split = best_split(&s).unwrap();
        assert_eq!(split.feature, 0);
        assert!((split.threshold - 0.5).abs() < 1e-12);
        assert!((split.vr - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pure_leaf_never_splits() {
        let s = vec![sample(0.1, 1), sample(0.5, 1), sample(0.9, 1)];
        assert_eq!(best_split(&s), None);
    }

    #[test]
    fn singleton_and_empty() {
        assert_eq!(best_split(&[]), None);
        assert_eq!(best_split(&[sample(0.3, 1)]), None);
    }

    #[test]
    fn identical_features_cannot_split() {
        let s = vec![sample(0.4, 0), sample(0.4, 1)];
        assert_eq!(best_split(&s), None);
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let c = midpoint(lo, hi);
        assert!(lo < c && c <= hi);
    }
}
