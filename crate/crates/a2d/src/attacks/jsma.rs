//! Jacobian-based saliency map attack, pixel-pair variant.
//!
//! Per iteration the Jacobian of the logits w.r.t. the pixels is computed
//! (one query bundle; two backward sweeps suffice since only the target row
//! and the summed other rows enter the objective), the best eligible pixel
//! pair is selected by exhaustive scan, and theta is added to both pixels.

use std::collections::HashSet;

use crate::error::Result;
use crate::nn::Model;
use crate::tensor::Tensor;

use super::{resolve_attacked, resolve_target, AttackConfig, AttackOutcome, Targeting};

/// Best pair by `(a_p + a_q) * |b_p + b_q|` over pairs with a positive
/// target-gradient sum and negative other-gradient sum. `eligible` marks
/// pixels that can still move; the modified-pixel budget is enforced via
/// `modified` and `budget`.
fn select_pair(
    a: &[f64],
    b: &[f64],
    eligible: &[bool],
    modified: &HashSet<usize>,
    budget: usize,
) -> Option<(usize, usize)> {
    let n = a.len();
    let mut best: Option<(f64, usize, usize)> = None;
    for p in 0..n {
        if !eligible[p] {
            continue;
        }
        for q in p + 1..n {
            if !eligible[q] {
                continue;
            }
            let extra = usize::from(!modified.contains(&p)) + usize::from(!modified.contains(&q));
            if modified.len() + extra > budget {
                continue;
            }
            let alpha = a[p] + a[q];
            let beta = b[p] + b[q];
            if alpha <= 0.0 || beta >= 0.0 {
                continue;
            }
            let score = alpha * beta.abs();
            match best {
                Some((s, _, _)) if s >= score => {}
                _ => best = Some((score, p, q)),
            }
        }
    }
    best.map(|(_, p, q)| (p, q))
}

pub fn jsma(model: &Model, x: &Tensor, cfg: &AttackConfig, attacked: Option<usize>) -> Result<AttackOutcome> {
    let n = x.len();
    let budget = (cfg.gamma * n as f64).floor() as usize;

    let attacked = resolve_attacked(model, x, attacked)?;
    if budget < 2 {
        // cannot afford a single pair
        return Ok(AttackOutcome::failure(attacked, 0, 0));
    }

    let targeting = match cfg.targeting {
        Targeting::Untarget => Targeting::TargetRank(2),
        t => t,
    };
    let target = resolve_target(model, x, targeting)?;

    let mut cur = x.clone();
    let mut modified: HashSet<usize> = HashSet::new();
    let mut iterations = 0;
    let mut queries = 0;

    // seed vectors for the two Jacobian sweeps
    let mut seed_target = vec![0.0; model.num_classes()];
    seed_target[target] = 1.0;
    let mut seed_others = vec![1.0; model.num_classes()];
    seed_others[target] = 0.0;

    let mut label = crate::nn::predict_label(model, &cur)?;
    loop {
        if label == target {
            return Ok(AttackOutcome::success(x, cur, label, iterations, queries));
        }
        if iterations == cfg.max_iter {
            return Ok(AttackOutcome::failure(attacked, iterations, queries));
        }

        let (_, a) = crate::nn::input_jacobian_seeded(model, cur.data(), &seed_target);
        let (_, b) = crate::nn::input_jacobian_seeded(model, cur.data(), &seed_others);
        queries += 1;

        let eligible: Vec<bool> = cur
            .data()
            .iter()
            .map(|&v| if cfg.theta > 0.0 { v < 1.0 } else { v > 0.0 })
            .collect();
        let Some((p, q)) = select_pair(&a, &b, &eligible, &modified, budget) else {
            return Ok(AttackOutcome::failure(attacked, iterations, queries));
        };

        let data = cur.data_mut();
        data[p] = (data[p] + cfg.theta).clamp(0.0, 1.0);
        data[q] = (data[q] + cfg.theta).clamp(0.0, 1.0);
        modified.insert(p);
        modified.insert(q);
        iterations += 1;

        // success check rides on this iteration's bundle
        label = crate::nn::predict_label(model, &cur)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::nn::LayerSpec;

    /// Hand-built 2-logit linear model over `dim` pixels.
    fn two_logit(dim: usize, w0: &[f64], w1: &[f64]) -> Model {
        let mut weights = Vec::with_capacity(dim * 2);
        for i in 0..dim {
            weights.push(w0[i]);
            weights.push(w1[i]);
        }
        Model::new(vec![LayerSpec::dense(dim, 2, weights, vec![0.0, 0.0]).unwrap()], dim, 2).unwrap()
    }

    #[test]
    fn tiny_budget_fails_immediately() {
        let model = two_logit(8, &[1.0; 8], &[-1.0; 8]);
        let x = Tensor::from_vec(vec![0.5; 8]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::Jsma);
        cfg.gamma = 0.1; // 0.8 pixels < 2
        let out = jsma(&model, &x, &cfg, None).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.queries, 0);
    }

    #[test]
    fn pair_selection_matches_exhaustive_oracle() {
        // Linear model: Jacobian rows are the weight columns, so the oracle
        // can rank every pair directly from the weights.
        let dim = 12;
        let w0: Vec<f64> = (0..dim).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        let w1: Vec<f64> = (0..dim).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0 - 0.6).collect();
        let model = two_logit(dim, &w0, &w1);
        let x = Tensor::from_vec(vec![0.4; dim]).unwrap();

        // target = class 1: a_i = w1[i], b_i = w0[i]
        let mut best: Option<(f64, usize, usize)> = None;
        for p in 0..dim {
            for q in p + 1..dim {
                let alpha = w1[p] + w1[q];
                let beta = w0[p] + w0[q];
                if alpha > 0.0 && beta < 0.0 {
                    let score = alpha * beta.abs();
                    if best.map_or(true, |(s, _, _)| score > s) {
                        best = Some((score, p, q));
                    }
                }
            }
        }
        let (_, ep, eq) = best.expect("weights admit at least one eligible pair");

        let mut cfg = AttackConfig::defaults_for(AttackKind::Jsma);
        cfg.targeting = Targeting::TargetClass(1);
        cfg.gamma = 1.0;
        cfg.theta = 0.3;
        cfg.max_iter = 1;
        let out = jsma(&model, &x, &cfg, None).unwrap();
        // whether or not one pair already flips the label, the first pair
        // modified must be the oracle's argmax pair
        let adv_or_cur = out.adversarial.clone();
        if let Some(adv) = adv_or_cur {
            let changed: Vec<usize> = (0..dim).filter(|&i| adv.data()[i] != x.data()[i]).collect();
            assert_eq!(changed, vec![ep.min(eq), ep.max(eq)]);
        } else {
            // failure with one iteration still spent one query
            assert!(out.queries <= 1);
        }
    }

    #[test]
    fn modified_pixel_budget_is_enforced() {
        let dim = 20;
        let w0: Vec<f64> = (0..dim).map(|i| -1.0 - (i as f64) * 0.01).collect();
        let w1: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64) * 0.01).collect();
        let model = two_logit(dim, &w0, &w1);
        // class 0 dominates at x; flipping to 1 needs many pixels
        let x = Tensor::from_vec(vec![0.1; dim]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::Jsma);
        cfg.targeting = Targeting::TargetClass(1);
        cfg.gamma = 0.2; // 4 pixels -> at most 2 pairs
        cfg.theta = 0.05; // small steps so saturation never frees the budget
        cfg.max_iter = 100;
        let out = jsma(&model, &x, &cfg, None).unwrap();
        if let Some(adv) = &out.adversarial {
            assert!(adv.data().iter().zip(x.data()).filter(|(a, b)| a != b).count() <= 4);
        }
    }
}
