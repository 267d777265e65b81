//! Adaptive-attack evaluation: confidence sweeps against C&W, the
//! autoencoder large-distortion detector, PGD adversarial training, and
//! their combinations with the cost-based detector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{bim, cw_l2, AttackConfig, AttackKind, Targeting};
use crate::data::Dataset;
use crate::detectors::{EnsembleZ, Verdict, ZScoreDetector};
use crate::error::{Error, Result};
use crate::nn::{forward, Model, TrainConfig};
use crate::tensor::Tensor;

/// Autoencoder detector: flags inputs whose reconstruction MSE exceeds a
/// threshold fitted to benign data.
#[derive(Debug, Clone)]
pub struct AeDetector {
    pub autoencoder: Model,
    pub tau: f64,
}

/// Trains a dense autoencoder `input -> 128 -> bottleneck -> 128 -> input`
/// on benign inputs with MSE reconstruction loss.
pub fn train_autoencoder(
    benign: &Dataset,
    bottleneck_dim: usize,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<crate::nn::EpochStats>)> {
    let Some(dim) = benign.input_dim() else {
        return Err(Error::Data("cannot train an autoencoder on an empty dataset".into()));
    };
    if bottleneck_dim == 0 {
        return Err(Error::config("bottleneck_dim must be positive"));
    }
    let model = Model::new_mlp(dim, &[128, bottleneck_dim, 128], dim, cfg.seed, cfg.weight_init_scale)?;
    let inputs: Vec<&Tensor> = benign.examples().iter().map(|e| &e.pixels).collect();
    let references: Vec<Tensor> = benign.examples().iter().map(|e| e.pixels.clone()).collect();
    crate::nn::sgd_epochs(model, &inputs, crate::nn::Targets::References(&references), cfg, None)
}

/// Reconstruction MSE of one input.
pub fn reconstruction_error(autoencoder: &Model, x: &Tensor) -> Result<f64> {
    let recon = forward(autoencoder, x)?;
    Ok(x.mse(&recon))
}

/// Sets the threshold at the `(1 - target_fpr)` quantile of benign
/// reconstruction errors; `target_fpr = 0` keeps every benign example
/// (threshold = max error, strict comparison).
pub fn ae_fit_threshold(autoencoder: Model, benign: &Dataset, target_fpr: f64) -> Result<AeDetector> {
    if benign.is_empty() {
        return Err(Error::Data("threshold fitting needs benign examples".into()));
    }
    if !(0.0..1.0).contains(&target_fpr) {
        return Err(Error::config("target_fpr must lie in [0, 1)"));
    }
    let mut errors = benign
        .examples()
        .iter()
        .map(|e| reconstruction_error(&autoencoder, &e.pixels))
        .collect::<Result<Vec<_>>>()?;
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = errors.len();
    let index = (((1.0 - target_fpr) * n as f64).ceil() as usize).clamp(1, n) - 1;
    let tau = errors[index];
    if tau <= 0.0 {
        return Err(Error::Fit("degenerate autoencoder: zero reconstruction error".into()));
    }
    Ok(AeDetector { autoencoder, tau })
}

impl AeDetector {
    /// Adversarial iff the reconstruction error strictly exceeds tau.
    pub fn classify(&self, x: &Tensor) -> Result<Verdict> {
        let err = reconstruction_error(&self.autoencoder, x)?;
        Ok(if err > self.tau { Verdict::Adversarial } else { Verdict::Benign })
    }
}

/// PGD adversarial training: every example is replaced by a fixed-step BIM
/// Linf perturbation against its ground-truth label (no early stop) before
/// the gradient step. `pgd.epsilon = 0` reduces to plain training.
pub fn pgd_adversarial_train(
    model: Model,
    data: &Dataset,
    pgd: &AttackConfig,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<crate::nn::EpochStats>)> {
    if !matches!(pgd.kind, AttackKind::BimLinf) {
        return Err(Error::config("adversarial training uses a BIM Linf inner attack"));
    }
    pgd.validate()?;
    for (i, ex) in data.examples().iter().enumerate() {
        if ex.label >= model.num_classes() {
            return Err(Error::Data(format!("example {i}: label {} out of range", ex.label)));
        }
    }
    let inputs: Vec<&Tensor> = data.examples().iter().map(|e| &e.pixels).collect();
    let labels: Vec<usize> = data.examples().iter().map(|e| e.label).collect();
    let steps = pgd.max_iter;
    let perturb = move |m: &Model, x: &Tensor, idx: usize| -> Tensor {
        pgd_perturb(m, x, labels[idx], pgd.epsilon, pgd.alpha, steps)
    };
    crate::nn::sgd_epochs(
        model,
        &inputs,
        crate::nn::Targets::Labels(&data.examples().iter().map(|e| e.label).collect::<Vec<_>>()),
        cfg,
        Some(&perturb),
    )
}

/// Fixed-step Linf inner maximizer (no early stop, no random start).
fn pgd_perturb(model: &Model, x: &Tensor, label: usize, epsilon: f64, alpha: f64, steps: usize) -> Tensor {
    if epsilon == 0.0 {
        return x.clone();
    }
    let mut cur = x.clone();
    let loss = crate::nn::LossKind::CrossEntropy { label };
    for _ in 0..steps {
        let Ok((_, grad)) = crate::nn::input_gradient(model, &cur, &loss) else {
            return x.clone();
        };
        for (c, g) in cur.data_mut().iter_mut().zip(grad.data()) {
            *c += alpha * crate::attacks::sign(*g);
        }
        crate::attacks::project(cur.data_mut(), x.data(), epsilon, crate::attacks::Norm::Linf);
    }
    cur
}

/// Cost-based detector used inside the sweep: either a single BIM Z-score
/// detector or the full ensemble.
pub enum CostDetector<'a> {
    Single { detector: &'a ZScoreDetector, defense: &'a AttackConfig },
    Ensemble { ensemble: &'a EnsembleZ, defenses: &'a [AttackConfig] },
}

impl CostDetector<'_> {
    /// Runs the defense attack(s) on `x` and classifies the resulting cost
    /// fingerprint. Returns the verdict and the defense-attack cost of the
    /// first member (the headline cost statistic of the sweep).
    fn classify(&self, model: &Model, x: &Tensor, example_id: usize) -> Result<(Verdict, usize)> {
        match self {
            CostDetector::Single { detector, defense } => {
                let fp = crate::fingerprint::fingerprint_one(
                    model,
                    example_id,
                    crate::fingerprint::Origin::Benign,
                    x,
                    std::slice::from_ref(*defense),
                    &[],
                )?;
                Ok((detector.classify(fp.costs[0] as f64), fp.costs[0]))
            }
            CostDetector::Ensemble { ensemble, defenses } => {
                let fp = crate::fingerprint::fingerprint_one(
                    model,
                    example_id,
                    crate::fingerprint::Origin::Benign,
                    x,
                    defenses,
                    &[],
                )?;
                let verdict = ensemble.classify(&fp.cost_vector())?;
                Ok((verdict, fp.costs[0]))
            }
        }
    }
}

/// One row of the adaptive sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub attempts: usize,
    /// Successful attacks within the L2 cap.
    pub successes: usize,
    pub asr_without_defense: f64,
    pub detection_rate_a2d: f64,
    pub detection_rate_ae: f64,
    pub detection_rate_combined: f64,
    /// Successful and undetected by the combined rule.
    pub residual_asr: f64,
    pub mean_l2_distortion: f64,
    pub mean_defense_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Crafts C&W examples per kappa against `model`, enforcing the L2 cap
/// (attempts beyond the cap count as failed), and measures each enabled
/// defense's detection rate plus the combined any-flag rule.
pub fn kappa_sweep(
    model: &Model,
    inputs: &[(usize, &Tensor)],
    kappas: &[f64],
    cost_detector: Option<&CostDetector<'_>>,
    ae: Option<&AeDetector>,
    cw_base: &AttackConfig,
    l2_cap: f64,
    workers: usize,
) -> Result<SweepResult> {
    if kappas.is_empty() {
        return Err(Error::config("kappa sweep needs at least one kappa"));
    }
    if l2_cap <= 0.0 {
        return Err(Error::config("l2_cap must be positive"));
    }
    if !matches!(cw_base.kind, AttackKind::CwL2) {
        return Err(Error::config("sweep attack must be CW L2"));
    }

    struct Cell {
        success: bool,
        distortion: f64,
        flagged_a2d: bool,
        flagged_ae: bool,
        defense_cost: usize,
    }

    let run_cell = |kappa: f64, id: usize, x: &Tensor| -> Result<Cell> {
        let cfg = AttackConfig {
            kappa,
            targeting: match cw_base.targeting {
                Targeting::Untarget => Targeting::TargetRank(2),
                t => t,
            },
            ..cw_base.clone()
        };
        let outcome = cw_l2(model, x, &cfg)?;
        let success = outcome.success && outcome.distortion_l2 <= l2_cap;
        if !success {
            return Ok(Cell {
                success: false,
                distortion: outcome.distortion_l2,
                flagged_a2d: false,
                flagged_ae: false,
                defense_cost: 0,
            });
        }
        let adv = outcome.adversarial.as_ref().expect("successful outcome carries the example");
        let (flagged_a2d, defense_cost) = match cost_detector {
            Some(det) => {
                let (v, cost) = det.classify(model, adv, id)?;
                (v == Verdict::Adversarial, cost)
            }
            None => (false, 0),
        };
        let flagged_ae = match ae {
            Some(det) => det.classify(adv)? == Verdict::Adversarial,
            None => false,
        };
        Ok(Cell {
            success: true,
            distortion: outcome.distortion_l2,
            flagged_a2d,
            flagged_ae,
            defense_cost,
        })
    };

    let mut rows = Vec::with_capacity(kappas.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;

    for &kappa in kappas {
        let cells: Vec<Cell> = pool.install(|| {
            inputs
                .par_iter()
                .map(|(id, x)| run_cell(kappa, *id, x))
                .collect::<Result<Vec<_>>>()
        })?;

        let attempts = cells.len();
        let succ: Vec<&Cell> = cells.iter().filter(|c| c.success).collect();
        let successes = succ.len();
        let detected_a2d = succ.iter().filter(|c| c.flagged_a2d).count();
        let detected_ae = succ.iter().filter(|c| c.flagged_ae).count();
        let detected_any = succ.iter().filter(|c| c.flagged_a2d || c.flagged_ae).count();
        let rate = |num: usize| if successes == 0 { 0.0 } else { num as f64 / successes as f64 };
        rows.push(SweepRow {
            kappa,
            attempts,
            successes,
            asr_without_defense: successes as f64 / attempts.max(1) as f64,
            detection_rate_a2d: rate(detected_a2d),
            detection_rate_ae: rate(detected_ae),
            detection_rate_combined: rate(detected_any),
            residual_asr: (successes - detected_any) as f64 / attempts.max(1) as f64,
            mean_l2_distortion: if successes == 0 {
                0.0
            } else {
                succ.iter().map(|c| c.distortion).sum::<f64>() / successes as f64
            },
            mean_defense_cost: if successes == 0 {
                0.0
            } else {
                succ.iter().map(|c| c.defense_cost as f64).sum::<f64>() / successes as f64
            },
        });
    }
    Ok(SweepResult { rows })
}

/// Convenience: fixed-step BIM-d cost of one input (used by sweeps and the
/// adversarial-training evaluation).
pub fn defense_cost(model: &Model, x: &Tensor, defense: &AttackConfig) -> Result<usize> {
    let outcome = bim(model, x, defense, None)?;
    Ok(if outcome.success { outcome.iterations } else { defense.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;

    fn ae_train_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.2,
            epochs: 30,
            batch_size: 16,
            seed,
            weight_init_scale: 1.0,
        }
    }

    #[test]
    fn ae_threshold_quantile_endpoint() {
        let data = synthetic_blobs(2, 60, 8, 0.05, 3).unwrap();
        let (ae, _) = train_autoencoder(&data, 4, &ae_train_cfg(1)).unwrap();
        let det = ae_fit_threshold(ae, &data, 0.0).unwrap();
        // target_fpr = 0: tau is the max benign error, so nothing in-sample flags
        for ex in data.examples() {
            assert_eq!(det.classify(&ex.pixels).unwrap(), Verdict::Benign);
        }
    }

    #[test]
    fn ae_flags_noise_far_from_manifold() {
        let data = synthetic_blobs(2, 80, 8, 0.03, 7).unwrap();
        let (ae, _) = train_autoencoder(&data, 4, &ae_train_cfg(2)).unwrap();
        let det = ae_fit_threshold(ae, &data, 0.01).unwrap();
        // alternating extreme pixels are far from both blob centers
        let noise = Tensor::from_vec(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(det.classify(&noise).unwrap(), Verdict::Adversarial);
        let err = reconstruction_error(&det.autoencoder, &noise).unwrap();
        assert!(err > det.tau);
    }

    #[test]
    fn ae_held_out_fpr_tracks_target() {
        let data = synthetic_blobs(2, 300, 8, 0.05, 11).unwrap();
        let (fit_half, held_half) = data.split(300, 300, 5).unwrap();
        let (ae, _) = train_autoencoder(&fit_half, 4, &ae_train_cfg(3)).unwrap();
        let target = 0.10;
        let det = ae_fit_threshold(ae, &fit_half, target).unwrap();
        let flagged = held_half
            .examples()
            .iter()
            .filter(|e| det.classify(&e.pixels).unwrap() == Verdict::Adversarial)
            .count();
        let fpr = flagged as f64 / held_half.len() as f64;
        assert!((fpr - target).abs() <= 0.03 + 1e-9, "held-out fpr {fpr}");
    }

    #[test]
    fn pgd_epsilon_zero_matches_plain_training() {
        let data = synthetic_blobs(2, 40, 4, 0.1, 17).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.3,
            epochs: 5,
            batch_size: 8,
            seed: 23,
            weight_init_scale: 1.0,
        };
        let init = Model::new_mlp(4, &[6], 2, 9, 1.0).unwrap();
        let pgd = AttackConfig {
            epsilon: 0.0,
            alpha: 0.05,
            max_iter: 5,
            ..AttackConfig::defaults_for(AttackKind::BimLinf)
        };
        let (plain, h1) = crate::nn::train(init.clone(), &data, &cfg).unwrap();
        let (adv, h2) = pgd_adversarial_train(init, &data, &pgd, &cfg).unwrap();
        assert_eq!(plain, adv);
        assert_eq!(h1, h2);
    }
}
