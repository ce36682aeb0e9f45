//! Dense layers, convolutions and the training loop.

mod network;
mod train;

use alloc::vec;
use alloc::vec::Vec;

pub use network::{Architecture, FeatureShape, Gradients, LayerSpec, Network, Parameters, Trace};
pub use train::{accuracy, train, train_observed, Optimizer, TrainConfig, TrainObserver};

use crate::error::{bail_shape, Error, Result};
use crate::tensor::Tensor;

/// Floor applied to probabilities inside the logarithm of the loss.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Row softmax with max-subtraction, written into `out`.
pub fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = libm::exp(z - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise softmax of a `B × K` tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.all_finite() {
        return Err(Error::NonFinite("softmax input"));
    }
    let k = logits.row_len();
    let mut out = vec![0.0; logits.len()];
    for (row, dst) in logits.iter_rows().zip(out.chunks_exact_mut(k)) {
        softmax_row(row, dst);
    }
    Ok(Tensor::from_parts(logits.shape().to_vec(), out))
}

/// Mean cross-entropy `−Σ t·ln max(p, floor)` over the batch.
pub fn cross_entropy(probs: &Tensor, targets: &Tensor) -> Result<f64> {
    if probs.shape() != targets.shape() {
        bail_shape!("probabilities {:?} vs targets {:?}", probs.shape(), targets.shape());
    }
    let total: f64 = probs
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * libm::log(p.max(PROBABILITY_FLOOR)))
        .sum();
    Ok(total / probs.rows() as f64)
}

/// Class probabilities (forward followed by softmax).
pub fn predict_soft(net: &Network, batch: &Tensor) -> Result<Tensor> {
    softmax(&net.forward(batch)?)
}

/// [`predict_soft`] over `chunk`-row slices to bound activation memory.
pub fn predict_soft_chunked(net: &Network, inputs: &Tensor, chunk: usize) -> Result<Tensor> {
    let chunk = chunk.max(1);
    let k = net.output_dim();
    let mut out = Vec::with_capacity(inputs.rows() * k);
    let mut start = 0;
    while start < inputs.rows() {
        let end = (start + chunk).min(inputs.rows());
        let idx: Vec<usize> = (start..end).collect();
        let part = predict_soft(net, &inputs.select_rows(&idx)?)?;
        out.extend_from_slice(part.data());
        start = end;
    }
    Tensor::new(vec![inputs.rows(), k], out)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Loss plus exact gradients for parameters and inputs.
#[derive(Clone, Debug)]
pub struct LossAndGradients {
    pub loss: f64,
    pub params: Gradients,
    pub input: Tensor,
}

/// Mean cross-entropy against `targets` (rows summing to 1) and its
/// reverse-mode gradients.
pub fn loss_and_gradients(net: &Network, batch: &Tensor, targets: &Tensor) -> Result<LossAndGradients> {
    let (loss, params, input) = loss_and_grads_inner(net, batch, targets, true)?;
    Ok(LossAndGradients { loss, params, input: input.expect("input gradient requested") })
}

pub(crate) fn loss_and_grads_inner(
    net: &Network,
    batch: &Tensor,
    targets: &Tensor,
    want_input: bool,
) -> Result<(f64, Gradients, Option<Tensor>)> {
    let b = batch.rows();
    let k = net.output_dim();
    if targets.rows() != b || targets.row_len() != k {
        bail_shape!("targets {:?} for batch of {} and {} classes", targets.shape(), b, k);
    }
    let trace = net.forward_trace(batch)?;
    let mut probs = vec![0.0; b * k];
    for (z, p) in trace.logits().chunks_exact(k).zip(probs.chunks_exact_mut(k)) {
        softmax_row(z, p);
    }
    let mut loss = 0.0;
    let mut d_logits = vec![0.0; b * k];
    let inv_b = 1.0 / b as f64;
    for ((p, t), d) in probs.chunks_exact(k).zip(targets.iter_rows()).zip(d_logits.chunks_exact_mut(k)) {
        let mass: f64 = t.iter().sum();
        for j in 0..k {
            if t[j] != 0.0 {
                loss -= t[j] * libm::log(p[j].max(PROBABILITY_FLOOR));
            }
            // d/dz of −Σ t ln softmax(z) is p·Σt − t.
            d[j] = (p[j] * mass - t[j]) * inv_b;
        }
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let (grads, input) = net.backward(&trace, &d_logits, want_input)?;
    Ok((loss, grads, input))
}
