//! Empirical robustness radius: bisection over the BIM budget for the
//! smallest epsilon at which the attack flips the input.

use crate::error::{Error, Result};
use crate::nn::{predict_label, Model};
use crate::tensor::Tensor;

use super::{bim, AttackConfig, AttackKind, Targeting};

/// Smallest epsilon in `[0, base.epsilon]` (up to `bisection_steps` of
/// refinement) at which the untargeted BIM attack succeeds. Returns
/// `base.epsilon` if even the full budget fails, and `0` for inputs the
/// model already labels differently from `attacked`.
pub fn robustness_radius(
    model: &Model,
    x: &Tensor,
    base: &AttackConfig,
    attacked: Option<usize>,
    bisection_steps: usize,
) -> Result<f64> {
    if !matches!(base.kind, AttackKind::BimLinf | AttackKind::BimL2) {
        return Err(Error::config("robustness radius probes with a BIM config"));
    }
    if base.targeting != Targeting::Untarget {
        return Err(Error::config("robustness radius needs an untargeted base attack"));
    }
    let attacked = super::resolve_attacked(model, x, attacked)?;
    if predict_label(model, x)? != attacked {
        return Ok(0.0);
    }

    let eps_max = base.epsilon;
    let succeeds = |eps: f64| -> Result<bool> {
        let cfg = AttackConfig { epsilon: eps, ..base.clone() };
        Ok(bim(model, x, &cfg, Some(attacked))?.success)
    };

    if !succeeds(eps_max)? {
        return Ok(eps_max);
    }
    // bracket: lo always fails, hi always succeeds
    let mut lo = 0.0;
    let mut hi = eps_max;
    for _ in 0..bisection_steps {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn linear_model() -> Model {
        let layer = LayerSpec::dense(2, 2, vec![3.0, 0.0, 0.0, 3.0], vec![0.0, 0.0]).unwrap();
        Model::new(vec![layer], 2, 2).unwrap()
    }

    #[test]
    fn misclassified_input_has_zero_radius() {
        let model = linear_model();
        let x = Tensor::from_vec(vec![0.8, 0.2]).unwrap();
        let base = AttackConfig::defaults_for(AttackKind::BimLinf);
        let r = robustness_radius(&model, &x, &base, Some(1), 8).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn radius_is_clamped_and_tracks_margin() {
        let model = linear_model();
        let base = AttackConfig {
            epsilon: 0.5,
            alpha: 0.01,
            max_iter: 100,
            ..AttackConfig::defaults_for(AttackKind::BimLinf)
        };
        // boundary at x0 = x1; the near point needs a smaller budget
        let near = Tensor::from_vec(vec![0.55, 0.45]).unwrap();
        let far = Tensor::from_vec(vec![0.95, 0.05]).unwrap();
        let r_near = robustness_radius(&model, &near, &base, None, 10).unwrap();
        let r_far = robustness_radius(&model, &far, &base, None, 10).unwrap();
        assert!(r_near <= base.epsilon);
        assert!(r_far <= base.epsilon);
        assert!(r_near < r_far, "near {r_near} vs far {r_far}");
    }

    #[test]
    fn unreachable_input_returns_eps_max() {
        // constant model never flips
        let layer = LayerSpec::dense(2, 2, vec![0.0; 4], vec![1.0, 0.0]).unwrap();
        let model = Model::new(vec![layer], 2, 2).unwrap();
        let x = Tensor::from_vec(vec![0.5, 0.5]).unwrap();
        let base = AttackConfig {
            epsilon: 0.4,
            max_iter: 5,
            ..AttackConfig::defaults_for(AttackKind::BimLinf)
        };
        let r = robustness_radius(&model, &x, &base, None, 6).unwrap();
        assert_eq!(r, 0.4);
    }
}
