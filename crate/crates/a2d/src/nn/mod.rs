//! Minimal dense neural-network engine: forward evaluation, exact
//! input/weight gradients, SGD training and binary model serialization.
//!
//! Models are plain data. Once training returns, a `Model` is treated as
//! read-only everywhere else in the crate, so shared references can be
//! evaluated from any number of threads.

mod backprop;
mod io;
mod train;

pub use backprop::{input_gradient, logits_and_input_jacobian};
pub(crate) use backprop::{input_gradient_with_logits as backprop_bundle, input_jacobian_seeded};
pub use io::{load_model, save_model};
pub use train::{train, EpochStats, TrainConfig};
pub(crate) use train::{sgd_epochs, Targets};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One layer of the network. Softmax is never a layer: it is applied only
/// inside losses and `predict`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Fully connected layer. Weights are row-major `in_dim x out_dim`.
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::dimension(format!(
                "dense layer {in_dim}x{out_dim} needs {} weights, got {}",
                in_dim * out_dim,
                weights.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::dimension(format!(
                "dense layer {in_dim}x{out_dim} needs {out_dim} bias values, got {}",
                bias.len()
            )));
        }
        Ok(LayerSpec::Dense { in_dim, out_dim, weights, bias })
    }
}

/// Ordered layer list plus the input/output contract. The protected
/// classifier, the attack target and (reused) the autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<LayerSpec>,
    input_dim: usize,
    num_classes: usize,
}

impl Model {
    /// Validates dimension compatibility along the layer chain and that the
    /// final layer is a `Dense` producing `num_classes` logits.
    pub fn new(layers: Vec<LayerSpec>, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::dimension("input_dim and num_classes must be positive"));
        }
        let mut dim = input_dim;
        let mut last_dense_out = None;
        for (idx, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    if *in_dim != dim {
                        return Err(Error::dimension(format!(
                            "layer {idx}: expects input {in_dim}, previous layer produces {dim}"
                        )));
                    }
                    dim = *out_dim;
                    last_dense_out = Some(*out_dim);
                }
                LayerSpec::Relu => {}
            }
        }
        match layers.last() {
            Some(LayerSpec::Dense { .. }) => {}
            _ => return Err(Error::dimension("model must end with a dense layer producing logits")),
        }
        if last_dense_out != Some(num_classes) || dim != num_classes {
            return Err(Error::dimension(format!(
                "final layer produces {dim} outputs, expected num_classes = {num_classes}"
            )));
        }
        Ok(Model { layers, input_dim, num_classes })
    }

    /// MLP builder: `Dense -> ReLU` for each hidden width, then a final
    /// `Dense` to the logits. Weights uniform in
    /// `+-init_scale / sqrt(in_dim)`, biases zero, seeded.
    pub fn new_mlp(
        input_dim: usize,
        hidden: &[usize],
        num_classes: usize,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        if init_scale <= 0.0 {
            return Err(Error::config("weight_init_scale must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut in_dim = input_dim;
        for &width in hidden {
            layers.push(init_dense(in_dim, width, init_scale, &mut rng)?);
            layers.push(LayerSpec::Relu);
            in_dim = width;
        }
        layers.push(init_dense(in_dim, num_classes, init_scale, &mut rng)?);
        Model::new(layers, input_dim, num_classes)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

fn init_dense(in_dim: usize, out_dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<LayerSpec> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::dimension("layer dims must be positive"));
    }
    let limit = scale / (in_dim as f64).sqrt();
    let weights = (0..in_dim * out_dim)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    LayerSpec::dense(in_dim, out_dim, weights, vec![0.0; out_dim])
}

/// Loss selector for gradient computation.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Softmax cross entropy against `label`.
    CrossEntropy { label: usize },
    /// Margin loss `max(max_{i != t} Z_i - Z_t, -kappa)`; the clamp makes
    /// the gradient exactly zero once the target leads by at least `kappa`.
    MarginCw { target: usize, kappa: f64 },
    /// Mean squared error of the logits against a reference tensor.
    Mse { reference: &'a Tensor },
}

impl LossKind<'_> {
    pub(crate) fn validate(&self, model: &Model) -> Result<()> {
        match self {
            LossKind::CrossEntropy { label } => {
                if *label >= model.num_classes {
                    return Err(Error::dimension(format!(
                        "label {label} out of range for {} classes",
                        model.num_classes
                    )));
                }
            }
            LossKind::MarginCw { target, kappa } => {
                if *target >= model.num_classes {
                    return Err(Error::dimension(format!(
                        "target {target} out of range for {} classes",
                        model.num_classes
                    )));
                }
                if *kappa < 0.0 {
                    return Err(Error::config("kappa must be >= 0"));
                }
                if model.num_classes < 2 {
                    return Err(Error::dimension("margin loss needs at least two classes"));
                }
            }
            LossKind::Mse { reference } => {
                if reference.len() != model.num_classes {
                    return Err(Error::dimension(format!(
                        "mse reference has {} values, model produces {}",
                        reference.len(),
                        model.num_classes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the network on a single example (`input_dim` values) or a
/// batch (`n x input_dim`), returning logits of matching arity.
pub fn forward(model: &Model, x: &Tensor) -> Result<Tensor> {
    match x.shape() {
        [d] if *d == model.input_dim => {
            let logits = forward_single(model, x.data());
            Tensor::new(vec![model.num_classes], logits)
        }
        [n, d] if *d == model.input_dim => {
            let mut out = Vec::with_capacity(n * model.num_classes);
            for row in x.data().chunks(model.input_dim) {
                out.extend(forward_single(model, row));
            }
            Tensor::new(vec![*n, model.num_classes], out)
        }
        other => Err(Error::dimension(format!(
            "input shape {other:?} incompatible with input_dim {}",
            model.input_dim
        ))),
    }
}

pub(crate) fn forward_single(model: &Model, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), model.input_dim);
    let mut cur = x.to_vec();
    for layer in &model.layers {
        cur = apply_layer(layer, &cur);
    }
    cur
}

pub(crate) fn apply_layer(layer: &LayerSpec, x: &[f64]) -> Vec<f64> {
    match layer {
        LayerSpec::Dense { in_dim, out_dim, weights, bias } => {
            debug_assert_eq!(x.len(), *in_dim);
            let mut out = bias.clone();
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &weights[i * out_dim..(i + 1) * out_dim];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
            out
        }
        LayerSpec::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted label (argmax of logits, ties toward the lowest class index)
/// plus the softmax probabilities.
pub fn predict(model: &Model, x: &Tensor) -> Result<(usize, Tensor)> {
    let logits = forward(model, x)?;
    if logits.shape().len() != 1 {
        return Err(Error::dimension("predict expects a single example"));
    }
    let probs = softmax(logits.data());
    let label = argmax(logits.data());
    Ok((label, Tensor::new(vec![model.num_classes], probs)?))
}

/// Predicted label only, skipping the probability allocation.
pub fn predict_label(model: &Model, x: &Tensor) -> Result<usize> {
    let logits = forward(model, x)?;
    Ok(argmax(logits.data()))
}

/// Loss value and its gradient with respect to the logits.
pub(crate) fn loss_and_logit_gradient(logits: &[f64], loss: &LossKind<'_>) -> (f64, Vec<f64>) {
    match loss {
        LossKind::CrossEntropy { label } => {
            let probs = softmax(logits);
            let value = -probs[*label].max(f64::MIN_POSITIVE).ln();
            let mut grad = probs;
            grad[*label] -= 1.0;
            (value, grad)
        }
        LossKind::MarginCw { target, kappa } => {
            let mut runner_up = None;
            for (i, &z) in logits.iter().enumerate() {
                if i == *target {
                    continue;
                }
                match runner_up {
                    None => runner_up = Some(i),
                    Some(j) if z > logits[j] => runner_up = Some(i),
                    _ => {}
                }
            }
            let j = runner_up.expect("validated: at least two classes");
            let margin = logits[j] - logits[*target];
            if margin <= -kappa {
                (-kappa, vec![0.0; logits.len()])
            } else {
                let mut grad = vec![0.0; logits.len()];
                grad[j] = 1.0;
                grad[*target] = -1.0;
                (margin, grad)
            }
        }
        LossKind::Mse { reference } => {
            let n = logits.len() as f64;
            let mut grad = Vec::with_capacity(logits.len());
            let mut value = 0.0;
            for (&z, &r) in logits.iter().zip(reference.data()) {
                let diff = z - r;
                value += diff * diff;
                grad.push(2.0 * diff / n);
            }
            (value / n, grad)
        }
    }
}
