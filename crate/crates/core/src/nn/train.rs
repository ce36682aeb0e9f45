use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::{argmax, loss_and_grads_inner, predict_soft_chunked};
use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail_arg!("learning_rate must be positive, got {}", self.learning_rate);
        }
        if self.batch_size == 0 {
            bail_arg!("batch_size must be at least 1");
        }
        match self.optimizer {
            Optimizer::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                bail_arg!("momentum must lie in [0, 1), got {}", momentum)
            }
            Optimizer::Adam { beta1, beta2, epsilon }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 =>
            {
                bail_arg!("invalid Adam parameters ({}, {}, {})", beta1, beta2, epsilon)
            }
            _ => Ok(()),
        }
    }
}

/// Hooks into [`train_observed`]. Both methods default to no-ops.
pub trait TrainObserver {
    /// Receives every assembled mini-batch before the forward pass and may
    /// replace it, including with a different per-sample shape (input
    /// encodings). `step` counts batches from zero.
    fn prepare_batch(&mut self, batch: Tensor, _step: u64) -> Result<Tensor> {
        Ok(batch)
    }

    fn epoch_end(&mut self, _epoch: usize, _mean_loss: f64) {}
}

impl TrainObserver for () {}

/// Mini-batch training on `inputs` (`M × features`) against soft or one-hot
/// `targets` (`M × classes`).
pub fn train(net: Network, inputs: &Tensor, targets: &Tensor, cfg: &TrainConfig) -> Result<Network> {
    train_observed(net, inputs, targets, cfg, &mut ())
}

pub fn train_observed(
    mut net: Network,
    inputs: &Tensor,
    targets: &Tensor,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Network> {
    cfg.validate()?;
    let m = inputs.rows();
    if targets.rows() != m || targets.row_len() != net.output_dim() {
        bail_shape!("targets {:?} do not match {} samples × {} classes", targets.shape(), m, net.output_dim());
    }
    for (i, t) in targets.iter_rows().enumerate() {
        let s: f64 = t.iter().sum();
        if (s - 1.0).abs() > 1e-9 || t.iter().any(|&v| v < 0.0) {
            bail_arg!("target row {} is not a probability vector (sum {})", i, s);
        }
    }
    let mut state = OptimizerState::new(&net, cfg.optimizer);
    let mut order: Vec<usize> = (0..m).collect();
    let mut shuffler = rng::stream(cfg.seed, 1, 0);
    let features = inputs.row_len();
    let classes = net.output_dim();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffler);
        }
        let mut epoch_loss = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut xb = Vec::with_capacity(idx.len() * features);
            let mut tb = Vec::with_capacity(idx.len() * classes);
            for &i in idx {
                xb.extend_from_slice(inputs.row(i));
                tb.extend_from_slice(targets.row(i));
            }
            let mut xshape = inputs.shape().to_vec();
            xshape[0] = idx.len();
            let xb = observer.prepare_batch(Tensor::from_parts(xshape, xb), step)?;
            let tb = Tensor::from_parts(vec![idx.len(), classes], tb);
            let loss = match loss_and_grads_inner(&net, &xb, &tb, false) {
                Ok((loss, grads, _)) => {
                    state.apply(&mut net, &grads, cfg.learning_rate);
                    loss
                }
                Err(Error::NonFinite(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || net.parameters().any(|p| p.weight.iter().chain(&p.bias).any(|v| !v.is_finite())) {
                return Err(Error::Divergence { epoch, batch: bi, loss });
            }
            epoch_loss += loss * idx.len() as f64;
            step += 1;
        }
        observer.epoch_end(epoch, epoch_loss / m as f64);
    }
    Ok(net)
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(net: &Network, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.len() != inputs.rows() {
        bail_shape!("{} labels for {} inputs", labels.len(), inputs.rows());
    }
    let probs = predict_soft_chunked(net, inputs, 1024)?;
    let hits = probs.iter_rows().zip(labels).filter(|(p, &y)| argmax(p) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

struct OptimizerState {
    kind: Optimizer,
    first: Vec<(Vec<f64>, Vec<f64>)>,
    second: Vec<(Vec<f64>, Vec<f64>)>,
    t: i32,
}

impl OptimizerState {
    fn new(net: &Network, kind: Optimizer) -> Self {
        let zeros = || -> Vec<(Vec<f64>, Vec<f64>)> {
            net.parameters().map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()])).collect()
        };
        let (first, second) = match kind {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::SgdMomentum { .. } => (zeros(), Vec::new()),
            Optimizer::Adam { .. } => (zeros(), zeros()),
        };
        Self { kind, first, second, t: 0 }
    }

    fn apply(&mut self, net: &mut Network, grads: &Gradients, lr: f64) {
        self.t += 1;
        for (li, (p, g)) in net.parameters_mut().zip(&grads.layers).enumerate() {
            if g.weight.is_empty() && g.bias.is_empty() {
                continue;
            }
            match self.kind {
                Optimizer::Sgd => {
                    sgd(&mut p.weight, &g.weight, lr);
                    sgd(&mut p.bias, &g.bias, lr);
                }
                Optimizer::SgdMomentum { momentum } => {
                    let (vw, vb) = &mut self.first[li];
                    heavy_ball(&mut p.weight, &g.weight, vw, momentum, lr);
                    heavy_ball(&mut p.bias, &g.bias, vb, momentum, lr);
                }
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    let c1 = 1.0 - libm::pow(beta1, f64::from(self.t));
                    let c2 = 1.0 - libm::pow(beta2, f64::from(self.t));
                    let (mw, mb) = &mut self.first[li];
                    let (vw, vb) = &mut self.second[li];
                    let h = AdamStep { beta1, beta2, epsilon, lr, c1, c2 };
                    h.apply(&mut p.weight, &g.weight, mw, vw);
                    h.apply(&mut p.bias, &g.bias, mb, vb);
                }
            }
        }
    }
}

fn sgd(p: &mut [f64], g: &[f64], lr: f64) {
    for (p, g) in p.iter_mut().zip(g) {
        *p -= lr * g;
    }
}

fn heavy_ball(p: &mut [f64], g: &[f64], v: &mut [f64], mu: f64, lr: f64) {
    for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

struct AdamStep {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    c1: f64,
    c2: f64,
}

impl AdamStep {
    fn apply(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        for i in 0..p.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = m[i] / self.c1;
            let v_hat = v[i] / self.c2;
            p[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
    }
}
