//! AUROC and ROC curves for cost-based scores. Orientation: lower scores
//! mean more adversarial, so AUROC is the probability that a random
//! adversarial score sits below a random benign one (ties count one half).

use crate::error::{Error, Result};

/// Rank-statistic AUROC (Mann-Whitney with midranks for ties), equal to the
/// pairwise comparison count up to floating error.
pub fn auroc(benign_scores: &[f64], adv_scores: &[f64]) -> Result<f64> {
    if benign_scores.is_empty() || adv_scores.is_empty() {
        return Err(Error::Data("auroc needs both score samples".into()));
    }
    let n_b = benign_scores.len();
    let n_a = adv_scores.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(n_b + n_a);
    all.extend(adv_scores.iter().map(|&s| (s, true)));
    all.extend(benign_scores.iter().map(|&s| (s, false)));
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // midrank sum of the adversarial sample
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0; // average of ranks i+1 ..= j
        for item in &all[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    // U counts (adv > benign) pairs with half-credit ties; the detector
    // orientation wants (adv < benign), so take the complement.
    let u = rank_sum - (n_a as f64) * (n_a as f64 + 1.0) / 2.0;
    Ok(1.0 - u / (n_a as f64 * n_b as f64))
}

/// Full ROC sweep: classify adversarial when `score <= threshold`, for every
/// distinct score, producing (fpr, tpr) points from (0,0) to (1,1).
pub fn roc_curve(benign_scores: &[f64], adv_scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    if benign_scores.is_empty() || adv_scores.is_empty() {
        return Err(Error::Data("roc curve needs both score samples".into()));
    }
    let mut thresholds: Vec<f64> = benign_scores.iter().chain(adv_scores).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut points = vec![(0.0, 0.0)];
    let n_b = benign_scores.len() as f64;
    let n_a = adv_scores.len() as f64;
    for t in thresholds {
        let fp = benign_scores.iter().filter(|&&s| s <= t).count() as f64;
        let tp = adv_scores.iter().filter(|&&s| s <= t).count() as f64;
        points.push((fp / n_b, tp / n_a));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(n*m) pairwise oracle.
    fn pairwise_auroc(benign: &[f64], adv: &[f64]) -> f64 {
        let mut total = 0.0;
        for &a in adv {
            for &b in benign {
                if a < b {
                    total += 1.0;
                } else if a == b {
                    total += 0.5;
                }
            }
        }
        total / (benign.len() * adv.len()) as f64
    }

    #[test]
    fn perfect_separation_is_one() {
        let benign = [10.0, 11.0, 12.0];
        let adv = [1.0, 2.0, 3.0];
        assert_eq!(auroc(&benign, &adv).unwrap(), 1.0);
    }

    #[test]
    fn mirrored_samples_are_exactly_half() {
        let xs = [1.0, 2.0, 5.0, 9.0];
        assert_eq!(auroc(&xs, &xs).unwrap(), 0.5);
    }

    #[test]
    fn matches_pairwise_oracle_with_ties() {
        let mut state = 0xdeadbeefu64;
        let mut next = move |m: u64| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % m) as f64
        };
        for trial in 0..50 {
            let benign: Vec<f64> = (0..37).map(|_| next(25)).collect();
            let adv: Vec<f64> = (0..23).map(|_| next(25)).collect();
            let fast = auroc(&benign, &adv).unwrap();
            let slow = pairwise_auroc(&benign, &adv);
            assert!((fast - slow).abs() < 1e-12, "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn invariant_under_strictly_increasing_maps() {
        let benign = [4.0, 9.0, 30.0, 12.0, 7.0];
        let adv = [1.0, 2.0, 6.0, 2.0];
        let base = auroc(&benign, &adv).unwrap();
        let f = |x: f64| x * x + 1.0; // strictly increasing on costs >= 0
        let benign2: Vec<f64> = benign.iter().map(|&x| f(x)).collect();
        let adv2: Vec<f64> = adv.iter().map(|&x| f(x)).collect();
        assert!((auroc(&benign2, &adv2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn roc_curve_endpoints_and_monotonicity() {
        let benign = [5.0, 8.0, 13.0, 21.0];
        let adv = [1.0, 2.0, 8.0];
        let curve = roc_curve(&benign, &adv).unwrap();
        assert_eq!(*curve.first().unwrap(), (0.0, 0.0));
        assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
        for w in curve.windows(2) {
            assert!(w[1].0 >= w[0].0);
            assert!(w[1].1 >= w[0].1);
        }
    }
}
