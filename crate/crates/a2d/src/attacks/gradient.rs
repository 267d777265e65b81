//! One-step and iterative gradient-sign attacks.

use crate::error::Result;
use crate::nn::{argmax, Model};
use crate::tensor::Tensor;

use super::{project, resolve_attacked, resolve_target, sign, AttackConfig, AttackKind, AttackOutcome, Norm, Targeting};

/// Loss seed for one gradient bundle: maximize cross entropy of the
/// attacked label (untargeted) or minimize it toward a target.
struct Direction {
    label: usize,
    ascend: bool,
}

fn direction(model: &Model, x: &Tensor, cfg: &AttackConfig, attacked: usize) -> Result<Direction> {
    match cfg.targeting {
        Targeting::Untarget => Ok(Direction { label: attacked, ascend: true }),
        _ => {
            let target = resolve_target(model, x, cfg.targeting)?;
            Ok(Direction { label: target, ascend: false })
        }
    }
}

/// Computes one loss gradient bundle at `cur`, returning the logits and the
/// ascent direction (already flipped for targeted attacks).
fn gradient_bundle(model: &Model, cur: &Tensor, dir: &Direction) -> Result<(Vec<f64>, Vec<f64>)> {
    let loss = crate::nn::LossKind::CrossEntropy { label: dir.label };
    let (_, grad, logits) = crate::nn::backprop_bundle(model, cur, &loss)?;
    let mut g = grad.into_data();
    if !dir.ascend {
        for v in &mut g {
            *v = -*v;
        }
    }
    Ok((logits, g))
}

/// Fast gradient sign method: a single step of size epsilon, Linf
/// (`eps * sign(grad)`) or L2 (`eps * grad / ||grad||`), clipped to `[0,1]`.
pub fn fgsm(model: &Model, x: &Tensor, cfg: &AttackConfig, attacked: Option<usize>) -> Result<AttackOutcome> {
    let attacked = resolve_attacked(model, x, attacked)?;
    let dir = direction(model, x, cfg, attacked)?;
    let (_, grad) = gradient_bundle(model, x, &dir)?;

    let mut adv = x.clone();
    match cfg.norm {
        Norm::Linf => {
            for (a, g) in adv.data_mut().iter_mut().zip(&grad) {
                *a = (*a + cfg.epsilon * sign(*g)).clamp(0.0, 1.0);
            }
        }
        Norm::L2 => {
            let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(AttackOutcome::failure(attacked, 1, 1));
            }
            for (a, g) in adv.data_mut().iter_mut().zip(&grad) {
                *a = (*a + cfg.epsilon * g / norm).clamp(0.0, 1.0);
            }
        }
    }

    let final_label = crate::nn::predict_label(model, &adv)?;
    if final_label != attacked {
        Ok(AttackOutcome::success(x, adv, final_label, 1, 1))
    } else {
        Ok(AttackOutcome::failure(attacked, 1, 1))
    }
}

/// Basic iterative method: steps of size alpha projected onto the
/// epsilon-ball around the input (Linf clip or L2 rescale) and onto
/// `[0,1]`; stops at the first misclassification or `max_iter`. One
/// gradient bundle per iteration, so `queries == iterations`.
pub fn bim(model: &Model, x: &Tensor, cfg: &AttackConfig, attacked: Option<usize>) -> Result<AttackOutcome> {
    let norm = match cfg.kind {
        AttackKind::BimL2 => Norm::L2,
        _ => Norm::Linf,
    };
    let attacked = resolve_attacked(model, x, attacked)?;
    let dir = direction(model, x, cfg, attacked)?;

    let mut cur = x.clone();
    let mut iterations = 0;
    loop {
        if iterations == cfg.max_iter {
            return Ok(AttackOutcome::failure(attacked, iterations, iterations));
        }
        let (_, grad) = gradient_bundle(model, &cur, &dir)?;
        match norm {
            Norm::Linf => {
                for (c, g) in cur.data_mut().iter_mut().zip(&grad) {
                    *c += cfg.alpha * sign(*g);
                }
            }
            Norm::L2 => {
                let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if gnorm == 0.0 {
                    return Ok(AttackOutcome::failure(attacked, iterations, iterations));
                }
                for (c, g) in cur.data_mut().iter_mut().zip(&grad) {
                    *c += cfg.alpha * g / gnorm;
                }
            }
        }
        project(cur.data_mut(), x.data(), cfg.epsilon, norm);
        iterations += 1;
        // the success check shares this iteration's bundle
        let logits = crate::nn::forward(model, &cur)?;
        let label = argmax(logits.data());
        if label != attacked {
            return Ok(AttackOutcome::success(x, cur, label, iterations, iterations));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    /// Two-class linear model: logit0 = w.x, logit1 = -w.x.
    fn linear_model(w: Vec<f64>) -> Model {
        let dim = w.len();
        let mut weights = Vec::with_capacity(dim * 2);
        for v in &w {
            weights.push(*v);
            weights.push(-*v);
        }
        Model::new(vec![LayerSpec::dense(dim, 2, weights, vec![0.0, 0.0]).unwrap()], dim, 2).unwrap()
    }

    #[test]
    fn fgsm_zero_epsilon_keeps_input() {
        let model = linear_model(vec![1.0, -2.0]);
        let x = Tensor::from_vec(vec![0.8, 0.1]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::Fgsm);
        cfg.epsilon = 0.0;
        // model predicts class 0 here; attacked = prediction, so no success
        let out = fgsm(&model, &x, &cfg, None).unwrap();
        assert!(!out.success);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.queries, 1);
        // already misclassified w.r.t. a caller-provided ground truth label
        let out = fgsm(&model, &x, &cfg, Some(1)).unwrap();
        assert!(out.success);
        assert_eq!(out.adversarial.as_ref().unwrap(), &x);
        assert_eq!(out.distortion_l2, 0.0);
    }

    #[test]
    fn fgsm_zero_gradient_component_is_untouched() {
        // identity logits on the first two pixels, dead third pixel:
        // its gradient is exactly 0, so sign(0) = 0 leaves it alone
        let weights = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let model = Model::new(
            vec![LayerSpec::dense(3, 2, weights, vec![0.0, 0.0]).unwrap()],
            3,
            2,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.7, 0.5, 0.4]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::Fgsm);
        cfg.epsilon = 0.15;
        let out = fgsm(&model, &x, &cfg, None).unwrap();
        assert!(out.success);
        let adv = out.adversarial.unwrap();
        assert_eq!(adv.data()[2], 0.4);
        assert_ne!(adv.data()[0], 0.7);
        assert_ne!(adv.data()[1], 0.5);
    }

    #[test]
    fn fgsm_l2_zero_gradient_fails_cleanly() {
        let model = linear_model(vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![0.5, 0.5]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::Fgsm);
        cfg.norm = Norm::L2;
        let out = fgsm(&model, &x, &cfg, None).unwrap();
        assert!(!out.success);
        assert!(out.adversarial.is_none());
    }

    #[test]
    fn bim_already_misclassified_costs_one() {
        let model = linear_model(vec![1.0, 1.0]);
        let x = Tensor::from_vec(vec![0.9, 0.9]).unwrap();
        let cfg = AttackConfig::defaults_for(AttackKind::BimLinf);
        // model says class 0; pretend ground truth is 1 -> already misclassified
        let out = bim(&model, &x, &cfg, Some(1)).unwrap();
        assert!(out.success);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.queries, 1);
        // the first step's perturbation is still applied
        assert!(out.distortion_linf > 0.0);
        assert!(out.distortion_linf <= cfg.alpha + 1e-12);
    }

    #[test]
    fn bim_one_step_equals_fgsm_when_alpha_covers_epsilon() {
        let model = linear_model(vec![1.5, -0.7, 0.4]);
        let x = Tensor::from_vec(vec![0.45, 0.55, 0.5]).unwrap();
        let mut bim_cfg = AttackConfig::defaults_for(AttackKind::BimLinf);
        bim_cfg.epsilon = 0.2;
        bim_cfg.alpha = 0.2;
        let mut fgsm_cfg = AttackConfig::defaults_for(AttackKind::Fgsm);
        fgsm_cfg.epsilon = 0.2;
        let b = bim(&model, &x, &bim_cfg, None).unwrap();
        let f = fgsm(&model, &x, &fgsm_cfg, None).unwrap();
        assert_eq!(b.success, f.success);
        if b.success {
            assert_eq!(b.iterations, 1);
            assert_eq!(b.adversarial, f.adversarial);
        }
    }

    #[test]
    fn bim_respects_linf_budget() {
        let model = linear_model(vec![2.0, -1.0, 0.5, 1.2]);
        let x = Tensor::from_vec(vec![0.5; 4]).unwrap();
        let mut cfg = AttackConfig::defaults_for(AttackKind::BimLinf);
        cfg.epsilon = 0.07;
        cfg.alpha = 0.02;
        cfg.max_iter = 50;
        let out = bim(&model, &x, &cfg, None).unwrap();
        if let Some(adv) = &out.adversarial {
            assert!(x.linf_distance(adv) <= cfg.epsilon + 1e-9);
        }
        assert!(out.iterations <= cfg.max_iter);
    }
}
