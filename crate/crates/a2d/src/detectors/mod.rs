//! Detectors over attack-cost fingerprints: K-NN votes, Box-Cox Z-scores,
//! their ensembles, and evaluation metrics.

mod knn;
mod metrics;
mod zscore;

pub use knn::{knn_fit, KnnDetector};
pub use metrics::{auroc, roc_curve};
pub use zscore::{boxcox_fit, boxcox_transform, zscore_fit, EnsembleZ, ZScoreDetector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Adversarial,
}

/// Detection quality report. "Positive" means flagged adversarial; the rate
/// fields are all derivable from the confusion counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: String,
    pub accuracy_benign: f64,
    pub accuracy_adv: f64,
    pub auroc: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub mean_queries_benign: f64,
    pub mean_queries_adv: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

/// Runs a classifier over a labeled fingerprint corpus. The closure returns
/// the verdict plus a benign-ness score (higher = more benign) that feeds
/// the AUROC computation.
pub fn evaluate<F>(name: &str, classify: F, corpus: &[Fingerprint]) -> Result<DetectionReport>
where
    F: Fn(&Fingerprint) -> Result<(Verdict, f64)>,
{
    let benign_n = corpus.iter().filter(|f| f.origin.is_benign()).count();
    let adv_n = corpus.len() - benign_n;
    if benign_n == 0 || adv_n == 0 {
        return Err(Error::Data("evaluation corpus needs both origins".into()));
    }

    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut benign_scores = Vec::with_capacity(benign_n);
    let mut adv_scores = Vec::with_capacity(adv_n);
    let mut benign_queries = 0usize;
    let mut adv_queries = 0usize;

    for fingerprint in corpus {
        let (verdict, score) = classify(fingerprint)?;
        match (fingerprint.origin.is_benign(), verdict) {
            (true, Verdict::Benign) => tn += 1,
            (true, Verdict::Adversarial) => fp += 1,
            (false, Verdict::Adversarial) => tp += 1,
            (false, Verdict::Benign) => fn_ += 1,
        }
        if fingerprint.origin.is_benign() {
            benign_scores.push(score);
            benign_queries += fingerprint.queries;
        } else {
            adv_scores.push(score);
            adv_queries += fingerprint.queries;
        }
    }

    Ok(DetectionReport {
        detector: name.to_string(),
        accuracy_benign: tn as f64 / benign_n as f64,
        accuracy_adv: tp as f64 / adv_n as f64,
        auroc: auroc(&benign_scores, &adv_scores)?,
        fpr: fp as f64 / benign_n as f64,
        tpr: tp as f64 / adv_n as f64,
        mean_queries_benign: benign_queries as f64 / benign_n as f64,
        mean_queries_adv: adv_queries as f64 / adv_n as f64,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Origin;

    fn corpus() -> Vec<Fingerprint> {
        let mut out = Vec::new();
        for i in 0..10 {
            out.push(Fingerprint {
                example_id: i,
                origin: Origin::Benign,
                costs: vec![100 + i],
                queries: 100 + i,
            });
        }
        for i in 0..10 {
            out.push(Fingerprint {
                example_id: 100 + i,
                origin: Origin::Adv("bim".into()),
                costs: vec![1 + i],
                queries: 1 + i,
            });
        }
        out
    }

    #[test]
    fn oracle_detector_is_perfect() {
        let report = evaluate(
            "oracle",
            |fp| {
                Ok((
                    if fp.origin.is_benign() { Verdict::Benign } else { Verdict::Adversarial },
                    fp.costs[0] as f64,
                ))
            },
            &corpus(),
        )
        .unwrap();
        assert_eq!(report.accuracy_benign, 1.0);
        assert_eq!(report.accuracy_adv, 1.0);
        assert_eq!(report.auroc, 1.0);
        assert_eq!(report.fpr, 0.0);
    }

    #[test]
    fn constant_benign_detector() {
        let report = evaluate(
            "lazy",
            |fp| Ok((Verdict::Benign, fp.costs[0] as f64)),
            &corpus(),
        )
        .unwrap();
        assert_eq!(report.accuracy_benign, 1.0);
        assert_eq!(report.accuracy_adv, 0.0);
    }

    #[test]
    fn rates_match_confusion_counts() {
        let report = evaluate(
            "threshold",
            |fp| {
                let v = if fp.costs[0] < 8 { Verdict::Adversarial } else { Verdict::Benign };
                Ok((v, fp.costs[0] as f64))
            },
            &corpus(),
        )
        .unwrap();
        let b = (report.true_negatives + report.false_positives) as f64;
        let a = (report.true_positives + report.false_negatives) as f64;
        assert_eq!(report.accuracy_benign, report.true_negatives as f64 / b);
        assert_eq!(report.accuracy_adv, report.true_positives as f64 / a);
        assert_eq!(report.fpr, report.false_positives as f64 / b);
        assert_eq!(report.tpr, report.true_positives as f64 / a);
    }

    #[test]
    fn needs_both_origins() {
        let only_benign: Vec<Fingerprint> =
            corpus().into_iter().filter(|f| f.origin.is_benign()).collect();
        assert!(evaluate("x", |_| Ok((Verdict::Benign, 0.0)), &only_benign).is_err());
    }
}
