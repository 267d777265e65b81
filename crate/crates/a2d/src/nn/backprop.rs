//! Exact reverse-mode gradients through the dense/ReLU stack.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{loss_and_logit_gradient, LayerSpec, LossKind, Model};

/// Per-layer inputs captured during a forward pass, plus the final logits.
pub(crate) struct ForwardCache {
    /// `inputs[i]` is the input handed to layer `i`.
    inputs: Vec<Vec<f64>>,
    pub(crate) logits: Vec<f64>,
}

pub(crate) fn forward_cached(model: &Model, x: &[f64]) -> ForwardCache {
    let mut inputs = Vec::with_capacity(model.layers().len());
    let mut cur = x.to_vec();
    for layer in model.layers() {
        let next = super::apply_layer(layer, &cur);
        inputs.push(cur);
        cur = next;
    }
    ForwardCache { inputs, logits: cur }
}

/// Propagates `d loss / d logits` back to the input. Leaves weights alone.
pub(crate) fn backward_input(model: &Model, cache: &ForwardCache, dlogits: &[f64]) -> Vec<f64> {
    let mut grad = dlogits.to_vec();
    for (layer, input) in model.layers().iter().zip(&cache.inputs).rev() {
        grad = layer_input_grad(layer, input, &grad);
    }
    grad
}

fn layer_input_grad(layer: &LayerSpec, input: &[f64], dout: &[f64]) -> Vec<f64> {
    match layer {
        LayerSpec::Dense { in_dim, out_dim, weights, .. } => {
            let mut din = Vec::with_capacity(*in_dim);
            for i in 0..*in_dim {
                let row = &weights[i * out_dim..(i + 1) * out_dim];
                din.push(row.iter().zip(dout).map(|(w, d)| w * d).sum());
            }
            din
        }
        LayerSpec::Relu => input
            .iter()
            .zip(dout)
            .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
            .collect(),
    }
}

/// Gradient accumulator matching the model's dense layers.
pub(crate) struct WeightGrads {
    /// One `(d weights, d bias)` entry per layer; `None` for ReLU.
    pub(crate) per_layer: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl WeightGrads {
    pub(crate) fn zeros(model: &Model) -> Self {
        let per_layer = model
            .layers()
            .iter()
            .map(|layer| match layer {
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    Some((vec![0.0; in_dim * out_dim], vec![0.0; *out_dim]))
                }
                LayerSpec::Relu => None,
            })
            .collect();
        WeightGrads { per_layer }
    }
}

/// Backward pass accumulating both weight gradients (into `grads`) and the
/// input gradient (returned). Used by the trainer.
pub(crate) fn backward_accumulate(
    model: &Model,
    cache: &ForwardCache,
    dlogits: &[f64],
    grads: &mut WeightGrads,
) -> Vec<f64> {
    let mut grad = dlogits.to_vec();
    for ((layer, input), slot) in model
        .layers()
        .iter()
        .zip(&cache.inputs)
        .zip(&mut grads.per_layer)
        .rev()
    {
        if let (LayerSpec::Dense { in_dim, out_dim, .. }, Some((dw, db))) = (layer, slot) {
            for (b, d) in db.iter_mut().zip(&grad) {
                *b += d;
            }
            for i in 0..*in_dim {
                let xi = input[i];
                if xi == 0.0 {
                    continue;
                }
                let row = &mut dw[i * out_dim..(i + 1) * out_dim];
                for (w, d) in row.iter_mut().zip(&grad) {
                    *w += xi * d;
                }
            }
        }
        grad = layer_input_grad(layer, input, &grad);
    }
    grad
}

/// Loss value and exact gradient of the loss with respect to the input.
pub fn input_gradient(model: &Model, x: &Tensor, loss: &LossKind<'_>) -> Result<(f64, Tensor)> {
    let (value, grad, _) = input_gradient_with_logits(model, x, loss)?;
    Ok((value, grad))
}

/// Same as [`input_gradient`] but also returns the logits of the forward
/// pass, so attack loops can check the current label and step from a single
/// model evaluation.
pub(crate) fn input_gradient_with_logits(
    model: &Model,
    x: &Tensor,
    loss: &LossKind<'_>,
) -> Result<(f64, Tensor, Vec<f64>)> {
    if x.shape() != [model.input_dim()] {
        return Err(Error::dimension(format!(
            "gradient input shape {:?}, expected [{}]",
            x.shape(),
            model.input_dim()
        )));
    }
    loss.validate(model)?;
    let cache = forward_cached(model, x.data());
    let (value, dlogits) = loss_and_logit_gradient(&cache.logits, loss);
    let grad = backward_input(model, &cache, &dlogits);
    Ok((value, Tensor::new(vec![model.input_dim()], grad)?, cache.logits))
}

/// Logits plus the full Jacobian `d logits[k] / d x[i]`, row-major per
/// class. One backward sweep per class.
pub fn logits_and_input_jacobian(model: &Model, x: &Tensor) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if x.shape() != [model.input_dim()] {
        return Err(Error::dimension(format!(
            "jacobian input shape {:?}, expected [{}]",
            x.shape(),
            model.input_dim()
        )));
    }
    let cache = forward_cached(model, x.data());
    let mut rows = Vec::with_capacity(model.num_classes());
    for k in 0..model.num_classes() {
        let mut seed = vec![0.0; model.num_classes()];
        seed[k] = 1.0;
        rows.push(backward_input(model, &cache, &seed));
    }
    Ok((cache.logits, rows))
}

/// Backward pass from an arbitrary seed vector over the logits. JSMA uses
/// this to get the target-logit row and the summed other-logit row of the
/// Jacobian in two sweeps instead of `num_classes`.
pub(crate) fn input_jacobian_seeded(model: &Model, x: &[f64], seed: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cache = forward_cached(model, x);
    let grad = backward_input(model, &cache, seed);
    (cache.logits, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, Model};

    fn finite_difference(
        model: &Model,
        x: &Tensor,
        loss: &LossKind<'_>,
        coord: usize,
        step: f64,
    ) -> f64 {
        let mut plus = x.clone();
        plus.data_mut()[coord] += step;
        let mut minus = x.clone();
        minus.data_mut()[coord] -= step;
        let eval = |t: &Tensor| {
            let logits = forward(model, t).unwrap();
            loss_and_logit_gradient(logits.data(), loss).0
        };
        (eval(&plus) - eval(&minus)) / (2.0 * step)
    }

    use crate::nn::loss_and_logit_gradient;

    #[test]
    fn gradient_matches_finite_differences() {
        let model = Model::new_mlp(6, &[8, 5], 4, 42, 1.0).unwrap();
        let x = Tensor::from_vec(vec![0.31, 0.72, 0.15, 0.88, 0.44, 0.09]).unwrap();
        let reference = Tensor::from_vec(vec![0.2, -0.4, 0.9, 0.0]).unwrap();
        let losses = [
            LossKind::CrossEntropy { label: 2 },
            LossKind::MarginCw { target: 1, kappa: 0.0 },
            LossKind::Mse { reference: &reference },
        ];
        for loss in &losses {
            let (_, grad) = input_gradient(&model, &x, loss).unwrap();
            for coord in 0..6 {
                let fd = finite_difference(&model, &x, loss, coord, 1e-5);
                let bp = grad.data()[coord];
                let denom = fd.abs().max(1e-6);
                assert!(
                    (bp - fd).abs() / denom < 1e-4,
                    "coord {coord}: bp {bp} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn clamped_margin_gradient_is_zero() {
        // The clamp engages once the target already leads every other logit
        // by at least kappa, making the loss constant there.
        let model = Model::new_mlp(4, &[6], 3, 7, 1.0).unwrap();
        let x = Tensor::from_vec(vec![0.5, 0.1, 0.9, 0.3]).unwrap();
        let logits = forward(&model, &x).unwrap();
        let target = crate::nn::argmax(logits.data());
        let runner_up = logits
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(_, &z)| z)
            .fold(f64::NEG_INFINITY, f64::max);
        let lead = logits.data()[target] - runner_up;
        assert!(lead > 0.0, "test needs a strict prediction");
        let kappa = lead / 2.0;
        let (value, grad) =
            input_gradient(&model, &x, &LossKind::MarginCw { target, kappa }).unwrap();
        assert_eq!(value, -kappa);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_model_gradient_is_zero() {
        // All-zero weights: logits are constant in x, so any loss gradient vanishes.
        let layer = crate::nn::LayerSpec::dense(3, 2, vec![0.0; 6], vec![0.3, -0.3]).unwrap();
        let model = Model::new(vec![layer], 3, 2).unwrap();
        let x = Tensor::from_vec(vec![0.4, 0.5, 0.6]).unwrap();
        let (_, grad) =
            input_gradient(&model, &x, &LossKind::CrossEntropy { label: 0 }).unwrap();
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn jacobian_matches_per_class_gradients() {
        let model = Model::new_mlp(5, &[7], 3, 11, 1.0).unwrap();
        let x = Tensor::from_vec(vec![0.2, 0.8, 0.5, 0.1, 0.95]).unwrap();
        let (logits, jac) = logits_and_input_jacobian(&model, &x).unwrap();
        let direct = forward(&model, &x).unwrap();
        assert_eq!(logits, direct.data());
        // Row k of the Jacobian equals the gradient of logit k, probed by a
        // margin-free linear functional via finite differences.
        for (k, row) in jac.iter().enumerate() {
            for coord in 0..5 {
                let mut plus = x.clone();
                plus.data_mut()[coord] += 1e-6;
                let mut minus = x.clone();
                minus.data_mut()[coord] -= 1e-6;
                let zp = forward(&model, &plus).unwrap().data()[k];
                let zm = forward(&model, &minus).unwrap().data()[k];
                let fd = (zp - zm) / 2e-6;
                assert!((row[coord] - fd).abs() < 1e-6);
            }
        }
    }
}
