//! Brute-force Euclidean K-NN over cost vectors. An input is adversarial
//! only when strictly more of its K nearest references are adversarial than
//! benign; distance ties at the K-th neighbor break toward the lower
//! example id.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

use super::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReference {
    pub example_id: usize,
    pub benign: bool,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnDetector {
    references: Vec<KnnReference>,
    k: usize,
}

/// Builds the detector from labeled fingerprints. `k` must not exceed the
/// reference count.
pub fn knn_fit(fingerprints: &[Fingerprint], k: usize) -> Result<KnnDetector> {
    if k == 0 {
        return Err(Error::config("k must be positive"));
    }
    if k > fingerprints.len() {
        return Err(Error::Fit(format!(
            "k = {k} exceeds the {} reference fingerprints",
            fingerprints.len()
        )));
    }
    let arity = fingerprints[0].costs.len();
    if fingerprints.iter().any(|f| f.costs.len() != arity) {
        return Err(Error::dimension("reference fingerprints have mixed cost arity"));
    }
    let references = fingerprints
        .iter()
        .map(|f| KnnReference {
            example_id: f.example_id,
            benign: f.origin.is_benign(),
            costs: f.cost_vector(),
        })
        .collect();
    Ok(KnnDetector { references, k })
}

impl KnnDetector {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn references(&self) -> &[KnnReference] {
        &self.references
    }

    pub fn arity(&self) -> usize {
        self.references[0].costs.len()
    }

    /// Majority vote over the K nearest references; ties go Benign.
    pub fn classify(&self, costs: &[f64]) -> Result<Verdict> {
        let (adv, benign) = self.votes(costs)?;
        Ok(if adv > benign { Verdict::Adversarial } else { Verdict::Benign })
    }

    /// Benign share of the K nearest references, usable as a benign-ness
    /// score for ROC analysis.
    pub fn benign_share(&self, costs: &[f64]) -> Result<f64> {
        let (_, benign) = self.votes(costs)?;
        Ok(benign as f64 / self.k as f64)
    }

    fn votes(&self, costs: &[f64]) -> Result<(usize, usize)> {
        if costs.len() != self.arity() {
            return Err(Error::dimension(format!(
                "probe has {} costs, references have {}",
                costs.len(),
                self.arity()
            )));
        }
        let mut scored: Vec<(f64, usize, bool)> = self
            .references
            .iter()
            .map(|r| {
                let d2: f64 = r
                    .costs
                    .iter()
                    .zip(costs)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, r.example_id, r.benign)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut adv = 0;
        let mut benign = 0;
        for (_, _, is_benign) in scored.iter().take(self.k) {
            if *is_benign {
                benign += 1;
            } else {
                adv += 1;
            }
        }
        Ok((adv, benign))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Origin;

    fn fp(id: usize, benign: bool, costs: Vec<usize>) -> Fingerprint {
        Fingerprint {
            example_id: id,
            origin: if benign { Origin::Benign } else { Origin::Adv("a".into()) },
            costs,
            queries: 0,
        }
    }

    #[test]
    fn all_benign_references_vote_benign() {
        let refs: Vec<Fingerprint> = (0..5).map(|i| fp(i, true, vec![i * 10])).collect();
        let det = knn_fit(&refs, 3).unwrap();
        assert_eq!(det.classify(&[0.0]).unwrap(), Verdict::Benign);
        assert_eq!(det.classify(&[1000.0]).unwrap(), Verdict::Benign);
    }

    #[test]
    fn even_split_is_benign_by_strict_majority() {
        let refs = vec![fp(0, true, vec![10]), fp(1, false, vec![12])];
        let det = knn_fit(&refs, 2).unwrap();
        assert_eq!(det.classify(&[11.0]).unwrap(), Verdict::Benign);
    }

    #[test]
    fn kth_distance_tie_breaks_by_lower_id() {
        // probe at 5: distances are 5 (id 0, benign), 5 (id 1, adv), 5 (id 2, adv).
        // K = 2 must keep ids 0 and 1 -> one each -> Benign.
        let refs = vec![fp(0, true, vec![0]), fp(1, false, vec![10]), fp(2, false, vec![0])];
        let det = knn_fit(&refs, 2).unwrap();
        assert_eq!(det.classify(&[5.0]).unwrap(), Verdict::Benign);
    }

    #[test]
    fn k_larger_than_references_is_rejected() {
        let refs = vec![fp(0, true, vec![1])];
        assert!(knn_fit(&refs, 2).is_err());
        assert!(knn_fit(&[], 1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let refs = vec![fp(0, true, vec![1, 2]), fp(1, false, vec![3, 4])];
        let det = knn_fit(&refs, 1).unwrap();
        assert!(det.classify(&[1.0]).is_err());
    }

    #[test]
    fn matches_exhaustive_scan_oracle() {
        // Deterministic pseudo-random reference set; the oracle recomputes
        // the vote with an independent full sort per probe.
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = move |m: u64| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state % m
        };
        let refs: Vec<Fingerprint> = (0..200)
            .map(|i| {
                let benign = next(2) == 0;
                let base = if benign { 50 } else { 5 };
                fp(i, benign, vec![base + next(40) as usize, base + next(40) as usize])
            })
            .collect();
        let det = knn_fit(&refs, 15).unwrap();
        for p in 0..50 {
            let probe = vec![next(100) as f64, next(100) as f64];
            let mut oracle: Vec<(f64, usize, bool)> = refs
                .iter()
                .map(|r| {
                    let d: f64 = r
                        .costs
                        .iter()
                        .zip(&probe)
                        .map(|(&a, &b)| (a as f64 - b) * (a as f64 - b))
                        .sum();
                    (d, r.example_id, r.origin.is_benign())
                })
                .collect();
            oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let benign_votes = oracle.iter().take(15).filter(|(_, _, b)| *b).count();
            let expect = if 15 - benign_votes > benign_votes {
                Verdict::Adversarial
            } else {
                Verdict::Benign
            };
            assert_eq!(det.classify(&probe).unwrap(), expect, "probe {p}");
        }
    }
}
