//! Decision-based label-only attack, simplified: start from a misclassified
//! point, then alternate orthogonal perturbations with a fixed contraction
//! toward the original. A proposal is accepted only if it stays
//! misclassified and strictly reduces the MSE to the original, so accepted
//! iterates approach the original monotonically. Terminates once
//! `MSE(adv, x) < mse_threshold`.
//!
//! Every label lookup counts as one query; iterations count accepted steps
//! only.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::nn::{predict_label, Model};
use crate::tensor::Tensor;

use super::{resolve_attacked, AttackConfig, AttackOutcome};

const INIT_DRAWS: usize = 100;
/// Orthogonal noise scale relative to the current distance to the original.
const ORTH_SCALE: f64 = 0.3;
/// Contraction toward the original per proposal.
const TOWARD_RATIO: f64 = 0.1;

pub fn dba(
    model: &Model,
    x: &Tensor,
    cfg: &AttackConfig,
    attacked: Option<usize>,
    pool: &[Tensor],
) -> Result<AttackOutcome> {
    let attacked = resolve_attacked(model, x, attacked)?;
    let mut queries = 0;

    // start = goal: the input itself already carries a different label
    queries += 1;
    if predict_label(model, x)? != attacked {
        let label = predict_label(model, x)?;
        return Ok(AttackOutcome::success(x, x.clone(), label, 0, queries));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = x.len();

    // find a misclassified starting point: seeded uniform noise, then the
    // caller-provided pool
    let mut adv: Option<(Tensor, usize)> = None;
    for _ in 0..INIT_DRAWS {
        let cand = Tensor::new(vec![dim], (0..dim).map(|_| rng.gen_range(0.0..=1.0)).collect())?;
        queries += 1;
        let label = predict_label(model, &cand)?;
        if label != attacked {
            adv = Some((cand, label));
            break;
        }
    }
    if adv.is_none() {
        for cand in pool {
            if cand.len() != dim {
                continue;
            }
            queries += 1;
            let label = predict_label(model, cand)?;
            if label != attacked {
                adv = Some((cand.clone(), label));
                break;
            }
        }
    }
    let Some((mut adv, mut adv_label)) = adv else {
        return Ok(AttackOutcome::failure(attacked, 0, queries));
    };

    let mut adv_mse = adv.mse(x);
    let mut iterations = 0;
    let mut proposals = 0;

    while adv_mse >= cfg.mse_threshold && proposals < cfg.max_iter {
        proposals += 1;
        let cand = propose(&adv, x, &mut rng);
        queries += 1;
        let label = predict_label(model, &cand)?;
        let mse = cand.mse(x);
        if label != attacked && mse < adv_mse {
            adv = cand;
            adv_label = label;
            adv_mse = mse;
            iterations += 1;
        }
    }

    if adv_mse < cfg.mse_threshold {
        Ok(AttackOutcome::success(x, adv, adv_label, iterations, queries))
    } else {
        Ok(AttackOutcome::failure(attacked, iterations, queries))
    }
}

/// Orthogonal perturbation (component along the adv-to-original axis
/// removed, rescaled to a fraction of the current distance) followed by a
/// fixed step toward the original, clipped to the pixel box.
fn propose(adv: &Tensor, x: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let dim = adv.len();
    let diff: Vec<f64> = adv.data().iter().zip(x.data()).map(|(a, b)| a - b).collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();

    let mut noise: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    if dist > 0.0 {
        let dot: f64 = noise.iter().zip(&diff).map(|(n, d)| n * d).sum();
        let proj = dot / (dist * dist);
        for (n, d) in noise.iter_mut().zip(&diff) {
            *n -= proj * d;
        }
    }
    let nn: f64 = noise.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = if nn > 0.0 { ORTH_SCALE * dist / nn } else { 0.0 };

    let mut cand = Vec::with_capacity(dim);
    for i in 0..dim {
        let stepped = adv.data()[i] + scale * noise[i];
        let contracted = stepped + TOWARD_RATIO * (x.data()[i] - stepped);
        cand.push(contracted.clamp(0.0, 1.0));
    }
    Tensor::new(vec![dim], cand).expect("clamped values are finite")
}
