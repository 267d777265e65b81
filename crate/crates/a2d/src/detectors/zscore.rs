//! Z-score detection over Box-Cox-transformed attack costs, fitted from
//! benign examples only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Verdict;

/// Box-Cox power transform with a fixed offset (costs may be zero, so the
/// data is shifted before transforming).
pub fn boxcox_transform(cost: f64, lambda: f64, offset: f64) -> f64 {
    let y = cost + offset;
    if lambda == 0.0 {
        y.ln()
    } else {
        (y.powf(lambda) - 1.0) / lambda
    }
}

/// Profile log-likelihood of the Box-Cox parameter for the shifted sample.
fn boxcox_log_likelihood(costs: &[f64], lambda: f64, offset: f64) -> f64 {
    let n = costs.len() as f64;
    let transformed: Vec<f64> = costs.iter().map(|&c| boxcox_transform(c, lambda, offset)).collect();
    let mean = transformed.iter().sum::<f64>() / n;
    let variance = transformed.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if variance <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let log_jacobian: f64 = costs.iter().map(|&c| (c + offset).ln()).sum();
    -0.5 * n * variance.ln() + (lambda - 1.0) * log_jacobian
}

/// Maximum-likelihood lambda over the grid `[-5, 5]` in steps of 0.01, with
/// offset fixed at 1 so zero costs stay transformable. Ties keep the lowest
/// lambda.
pub fn boxcox_fit(benign_costs: &[usize]) -> Result<(f64, f64)> {
    if benign_costs.is_empty() {
        return Err(Error::Fit("cannot fit Box-Cox on an empty sample".into()));
    }
    let (min, max) = benign_costs
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    if min == max {
        return Err(Error::Fit(
            "constant attack costs cannot be normalized; choose a different defense attack".into(),
        ));
    }
    let offset = 1.0;
    let costs: Vec<f64> = benign_costs.iter().map(|&c| c as f64).collect();
    let mut best_lambda = -5.0;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let lambda = -5.0 + i as f64 * 0.01;
        let ll = boxcox_log_likelihood(&costs, lambda, offset);
        if ll > best_ll {
            best_ll = ll;
            best_lambda = lambda;
        }
    }
    if best_ll == f64::NEG_INFINITY {
        return Err(Error::Fit(
            "constant attack costs: every lambda is degenerate; choose a different defense attack"
                .into(),
        ));
    }
    Ok((best_lambda, offset))
}

/// Single-attack Z-score detector: an input is adversarial when its
/// transformed cost sits more than `|h|` standard deviations below the
/// benign mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreDetector {
    pub boxcox_lambda: f64,
    pub boxcox_offset: f64,
    pub mu: f64,
    pub sigma: f64,
    pub threshold_h: f64,
}

/// Fits the detector from benign attack costs only. Requires at least 30
/// samples and non-constant costs.
pub fn zscore_fit(benign_costs: &[usize], h: f64) -> Result<ZScoreDetector> {
    if benign_costs.len() < 30 {
        return Err(Error::Fit(format!(
            "need at least 30 benign costs to fit, got {}",
            benign_costs.len()
        )));
    }
    let (lambda, offset) = boxcox_fit(benign_costs)?;
    let transformed: Vec<f64> = benign_costs
        .iter()
        .map(|&c| boxcox_transform(c as f64, lambda, offset))
        .collect();
    let n = transformed.len() as f64;
    let mu = transformed.iter().sum::<f64>() / n;
    let sigma = (transformed.iter().map(|t| (t - mu) * (t - mu)).sum::<f64>() / (n - 1.0)).sqrt();
    if sigma <= 1e-9 * mu.abs().max(1.0) || !sigma.is_finite() {
        return Err(Error::Fit(
            "constant attack costs give sigma = 0; choose a different defense attack".into(),
        ));
    }
    Ok(ZScoreDetector { boxcox_lambda: lambda, boxcox_offset: offset, mu, sigma, threshold_h: h })
}

impl ZScoreDetector {
    pub fn z(&self, cost: f64) -> f64 {
        (boxcox_transform(cost, self.boxcox_lambda, self.boxcox_offset) - self.mu) / self.sigma
    }

    pub fn classify(&self, cost: f64) -> Verdict {
        if self.z(cost) < self.threshold_h {
            Verdict::Adversarial
        } else {
            Verdict::Benign
        }
    }
}

/// Ensemble of per-defense Z-score detectors: an input is benign when at
/// least `vote_k` members say benign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleZ {
    pub members: Vec<ZScoreDetector>,
    pub vote_k: usize,
}

impl EnsembleZ {
    pub fn new(members: Vec<ZScoreDetector>, vote_k: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config("ensemble needs at least one member"));
        }
        if vote_k == 0 || vote_k > members.len() {
            return Err(Error::config(format!(
                "vote_k must lie in [1, {}], got {vote_k}",
                members.len()
            )));
        }
        Ok(EnsembleZ { members, vote_k })
    }

    pub fn classify(&self, costs: &[f64]) -> Result<Verdict> {
        Ok(if self.benign_votes(costs)? >= self.vote_k {
            Verdict::Benign
        } else {
            Verdict::Adversarial
        })
    }

    pub fn benign_votes(&self, costs: &[f64]) -> Result<usize> {
        if costs.len() != self.members.len() {
            return Err(Error::dimension(format!(
                "fingerprint has {} costs, ensemble has {} members",
                costs.len(),
                self.members.len()
            )));
        }
        Ok(self
            .members
            .iter()
            .zip(costs)
            .filter(|(m, &c)| m.classify(c) == Verdict::Benign)
            .count())
    }

    /// Minimum member z-score: a conservative benign-ness score.
    pub fn min_z(&self, costs: &[f64]) -> Result<f64> {
        if costs.len() != self.members.len() {
            return Err(Error::dimension("cost arity mismatch"));
        }
        Ok(self
            .members
            .iter()
            .zip(costs)
            .map(|(m, &c)| m.z(c))
            .fold(f64::INFINITY, f64::min))
    }
}
