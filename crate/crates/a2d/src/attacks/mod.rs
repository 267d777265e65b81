//! Instrumented attack suite: FGSM, BIM (Linf/L2), JSMA, a decision-based
//! label-only attack, simplified C&W-L2 with confidence, and an empirical
//! robustness-radius probe.
//!
//! Every attack is pure given `(model, input, config)`: a fixed seed yields
//! an identical [`AttackOutcome`]. Query accounting uses one unit per
//! attack iteration's model access bundle (a combined forward/backward plus
//! its success check); bookkeeping forwards that only resolve the attacked
//! label are free.

mod cw;
mod dba;
mod gradient;
mod jsma;
mod radius;

pub use cw::cw_l2;
pub use dba::dba;
pub use gradient::{bim, fgsm};
pub use jsma::jsma;
pub use radius::robustness_radius;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict_label, Model};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    Fgsm,
    BimLinf,
    BimL2,
    Jsma,
    Dba,
    CwL2,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::BimLinf => "bim",
            AttackKind::BimL2 => "bim2",
            AttackKind::Jsma => "jsma",
            AttackKind::Dba => "dba",
            AttackKind::CwL2 => "cw",
        }
    }

    /// Attacks whose iteration count tracks input robustness; one-step FGSM
    /// is excluded.
    pub fn usable_as_defense(&self) -> bool {
        !matches!(self, AttackKind::Fgsm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Targeting {
    /// Push away from the attacked label.
    Untarget,
    /// Target the r-th most probable class of the original prediction
    /// (rank 1 is the predicted class itself, rank 2 the runner-up).
    TargetRank(usize),
    TargetClass(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Norm budget (Linf or L2 radius depending on the attack).
    pub epsilon: f64,
    /// Step size: pixel step for BIM, tanh-space learning rate for C&W.
    pub alpha: f64,
    pub max_iter: usize,
    /// JSMA per-step pixel change.
    pub theta: f64,
    /// JSMA cap on the fraction of modified pixels, in (0, 1].
    pub gamma: f64,
    /// DBA stops once MSE(adv, original) falls below this.
    pub mse_threshold: f64,
    /// C&W confidence margin, >= 0.
    pub kappa: f64,
    /// C&W trade-off constant, > 0.
    pub c: f64,
    pub targeting: Targeting,
    /// Norm variant for FGSM (BIM carries its norm in `kind`).
    pub norm: Norm,
    pub seed: u64,
}

impl AttackConfig {
    /// MNIST-scale defaults per attack kind.
    pub fn defaults_for(kind: AttackKind) -> Self {
        let base = AttackConfig {
            kind,
            epsilon: 0.3,
            alpha: 0.01,
            max_iter: 500,
            theta: 1.0,
            gamma: 0.1,
            mse_threshold: 0.02,
            kappa: 0.0,
            c: 1.0,
            targeting: Targeting::Untarget,
            norm: Norm::Linf,
            seed: 0,
        };
        match kind {
            AttackKind::Fgsm => base,
            AttackKind::BimLinf => base,
            AttackKind::BimL2 => AttackConfig { epsilon: 8.4, alpha: 0.05, ..base },
            AttackKind::Jsma => AttackConfig { targeting: Targeting::TargetRank(2), ..base },
            AttackKind::Dba => base,
            AttackKind::CwL2 => AttackConfig {
                alpha: 0.1,
                c: 3.0,
                max_iter: 300,
                targeting: Targeting::TargetRank(2),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be finite and >= 0"));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::config("alpha must be finite and > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be >= 1"));
        }
        if self.kind == AttackKind::Jsma {
            if !(0.0 < self.gamma && self.gamma <= 1.0) {
                return Err(Error::config("gamma must lie in (0, 1]"));
            }
            if self.theta == 0.0 || !self.theta.is_finite() {
                return Err(Error::config("theta must be finite and nonzero"));
            }
        }
        if self.kind == AttackKind::Dba && self.mse_threshold <= 0.0 {
            return Err(Error::config("mse_threshold must be > 0"));
        }
        if self.kind == AttackKind::CwL2 {
            if self.kappa < 0.0 {
                return Err(Error::config("kappa must be >= 0"));
            }
            if self.c <= 0.0 {
                return Err(Error::config("c must be > 0"));
            }
        }
        if let Targeting::TargetRank(r) = self.targeting {
            if r == 0 {
                return Err(Error::config("target rank is 1-based"));
            }
        }
        Ok(())
    }
}

/// Result of one attack run. Distortions are measured against the original
/// input; `queries >= iterations` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    pub iterations: usize,
    pub queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial: Option<Tensor>,
    pub final_label: usize,
    pub distortion_l0: usize,
    pub distortion_l2: f64,
    pub distortion_linf: f64,
}

impl AttackOutcome {
    pub(crate) fn failure(attacked: usize, iterations: usize, queries: usize) -> Self {
        AttackOutcome {
            success: false,
            iterations,
            queries,
            adversarial: None,
            final_label: attacked,
            distortion_l0: 0,
            distortion_l2: 0.0,
            distortion_linf: 0.0,
        }
    }

    pub(crate) fn success(
        original: &Tensor,
        adversarial: Tensor,
        final_label: usize,
        iterations: usize,
        queries: usize,
    ) -> Self {
        let distortion_l0 = original.l0_distance(&adversarial);
        let distortion_l2 = original.l2_distance(&adversarial);
        let distortion_linf = original.linf_distance(&adversarial);
        AttackOutcome {
            success: true,
            iterations,
            queries,
            adversarial: Some(adversarial),
            final_label,
            distortion_l0,
            distortion_l2,
            distortion_linf,
        }
    }
}

/// Tensor serialization keeps `AttackOutcome` JSON sidecars self-contained.
impl Serialize for Tensor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Tensor", 2)?;
        s.serialize_field("shape", self.shape())?;
        s.serialize_field("data", self.data())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            shape: Vec<usize>,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Tensor::new(raw.shape, raw.data).map_err(serde::de::Error::custom)
    }
}

/// The label the attack tries to move away from: the caller's ground truth
/// when known, otherwise the model's prediction on the original input.
pub(crate) fn resolve_attacked(
    model: &Model,
    x: &Tensor,
    attacked: Option<usize>,
) -> Result<usize> {
    match attacked {
        Some(label) if label < model.num_classes() => Ok(label),
        Some(label) => Err(Error::dimension(format!(
            "attacked label {label} out of range for {} classes",
            model.num_classes()
        ))),
        None => predict_label(model, x),
    }
}

/// Resolves targeting against the probabilities of the original input.
pub(crate) fn resolve_target(
    model: &Model,
    x: &Tensor,
    targeting: Targeting,
) -> Result<usize> {
    match targeting {
        Targeting::Untarget => Err(Error::config("this attack needs a concrete target class")),
        Targeting::TargetClass(t) => {
            if t >= model.num_classes() {
                return Err(Error::dimension(format!(
                    "target class {t} out of range for {} classes",
                    model.num_classes()
                )));
            }
            Ok(t)
        }
        Targeting::TargetRank(r) => {
            if r > model.num_classes() {
                return Err(Error::dimension(format!(
                    "target rank {r} out of range for {} classes",
                    model.num_classes()
                )));
            }
            let logits = crate::nn::forward(model, x)?;
            let mut order: Vec<usize> = (0..model.num_classes()).collect();
            // descending by logit, ties toward the lower class index
            order.sort_by(|&a, &b| {
                logits.data()[b]
                    .partial_cmp(&logits.data()[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            Ok(order[r - 1])
        }
    }
}

/// Sign with an exact zero case: +1, -1 or 0.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projects `candidate` onto the epsilon-ball around `origin` (per `norm`)
/// and then onto the `[0,1]` box. Both steps only shrink per-coordinate
/// deviations, so budgets survive the box clip.
pub(crate) fn project(candidate: &mut [f64], origin: &[f64], epsilon: f64, norm: Norm) {
    match norm {
        Norm::Linf => {
            for (c, &o) in candidate.iter_mut().zip(origin) {
                *c = c.clamp(o - epsilon, o + epsilon).clamp(0.0, 1.0);
            }
        }
        Norm::L2 => {
            let mut sq = 0.0;
            for (c, &o) in candidate.iter().zip(origin) {
                sq += (c - o) * (c - o);
            }
            let dist = sq.sqrt();
            if dist > epsilon {
                let scale = epsilon / dist;
                for (c, &o) in candidate.iter_mut().zip(origin) {
                    *c = o + (*c - o) * scale;
                }
            }
            for c in candidate.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }
}

/// Dispatches an attack by config. `attacked` is the ground-truth label
/// when available; `pool` provides DBA's fallback starting points.
pub fn run_attack(
    model: &Model,
    x: &Tensor,
    cfg: &AttackConfig,
    attacked: Option<usize>,
    pool: &[Tensor],
) -> Result<AttackOutcome> {
    cfg.validate()?;
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, cfg, attacked),
        AttackKind::BimLinf | AttackKind::BimL2 => bim(model, x, cfg, attacked),
        AttackKind::Jsma => jsma(model, x, cfg, attacked),
        AttackKind::Dba => dba(model, x, cfg, attacked, pool),
        AttackKind::CwL2 => cw_l2(model, x, cfg),
    }
}
