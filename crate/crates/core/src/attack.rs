//! White-box evasion attacks (FGM, BIM, PGD, DeepFool, NewtonFool) and the
//! per-class measurements taken over an attack campaign.
//!
//! Every attack takes one sample as a `1 × …` tensor with pixels in
//! `[0, 1]` and returns an adversarial tensor of the same shape, also in
//! `[0, 1]`. Parameters given in byte units (`InputScale::Byte`) are divided
//! by 255 before use.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::defence::DefenceSpec;
use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::nn::{argmax, softmax_row, Network};
use crate::rng;
use crate::tensor::Tensor;

/// A differentiable classifier as the attacks see it.
pub trait Classifier {
    fn num_classes(&self) -> usize;

    /// Logits, `B × K`.
    fn logits(&self, x: &Tensor) -> Result<Tensor>;

    /// Logits plus the input gradient of `Σ_b ⟨g_b, logits_b⟩`, where `g` is
    /// computed from the logits by `seed` (`B × K`, row major).
    fn logits_and_grad(&self, x: &Tensor, seed: &mut dyn FnMut(&Tensor) -> Vec<f64>) -> Result<(Tensor, Tensor)>;

    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        crate::nn::softmax(&self.logits(x)?)
    }
}

impl Classifier for Network {
    fn num_classes(&self) -> usize {
        self.output_dim()
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }

    fn logits_and_grad(&self, x: &Tensor, seed: &mut dyn FnMut(&Tensor) -> Vec<f64>) -> Result<(Tensor, Tensor)> {
        let trace = self.forward_trace(x)?;
        let logits = Tensor::from_parts(vec![trace.batch(), self.output_dim()], trace.logits().to_vec());
        let d = seed(&logits);
        let (_, grad) = self.backward(&trace, &d, true)?;
        let grad = grad.expect("input gradient requested").reshape(x.shape().to_vec())?;
        Ok((logits, grad))
    }
}

/// A network behind its defence's inference-time input transform.
/// Gradients pass straight through the transform; for thermometer codes the
/// gradient of a pixel is the sum over its levels.
#[derive(Clone, Copy, Debug)]
pub struct Defended<'a> {
    pub network: &'a Network,
    pub defence: Option<DefenceSpec>,
}

impl<'a> Defended<'a> {
    pub fn new(network: &'a Network, defence: Option<DefenceSpec>) -> Self {
        Self { network, defence: defence.filter(|d| d.phases().inference_input) }
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        match &self.defence {
            Some(d) => d.transform_inputs(x),
            None => Ok(x.clone()),
        }
    }
}

impl Classifier for Defended<'_> {
    fn num_classes(&self) -> usize {
        self.network.output_dim()
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.network.forward(&self.encode(x)?)
    }

    fn logits_and_grad(&self, x: &Tensor, seed: &mut dyn FnMut(&Tensor) -> Vec<f64>) -> Result<(Tensor, Tensor)> {
        let (logits, g) = self.network.logits_and_grad(&self.encode(x)?, seed)?;
        let g = match self.defence {
            Some(DefenceSpec::Thermometer { levels }) => {
                Tensor::from_parts(x.shape().to_vec(), g.data().chunks_exact(levels).map(|c| c.iter().sum()).collect())
            }
            _ => g,
        };
        Ok((logits, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgm,
    Bim,
    Pgd,
    #[serde(rename = "deepfool")]
    DeepFool,
    #[serde(rename = "newtonfool")]
    NewtonFool,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] =
        [AttackKind::Fgm, AttackKind::Bim, AttackKind::Pgd, AttackKind::DeepFool, AttackKind::NewtonFool];

    pub fn id(self) -> &'static str {
        match self {
            AttackKind::Fgm => "fgm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
            AttackKind::DeepFool => "deepfool",
            AttackKind::NewtonFool => "newtonfool",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Linf,
    L2,
}

/// Units of `epsilon` and `epsilon_step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScale {
    #[default]
    Unit,
    Byte,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub epsilon_step: f64,
    #[serde(default = "one")]
    pub iterations: usize,
    /// DeepFool overshoot.
    #[serde(default)]
    pub overshoot: f64,
    /// NewtonFool step rate.
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub scale: InputScale,
}

fn default_norm() -> Norm {
    Norm::Linf
}

fn one() -> usize {
    1
}

impl AttackSpec {
    /// Parameters used on Fashion-MNIST (unit pixel range).
    pub fn fashion_mnist(kind: AttackKind) -> Self {
        let base = Self {
            kind,
            norm: Norm::Linf,
            epsilon: 0.3,
            epsilon_step: 0.01,
            iterations: 1,
            overshoot: 0.0,
            eta: 0.0,
            scale: InputScale::Unit,
        };
        match kind {
            AttackKind::Fgm => base,
            AttackKind::Bim => Self { iterations: 80, ..base },
            AttackKind::Pgd => Self { iterations: 40, ..base },
            AttackKind::DeepFool => Self { iterations: 100, overshoot: 0.02, ..base },
            AttackKind::NewtonFool => Self { iterations: 100, eta: 0.375, ..base },
        }
    }

    /// Parameters used on CIFAR-10, with budgets in byte units.
    pub fn cifar(kind: AttackKind) -> Self {
        let base = Self {
            kind,
            norm: Norm::Linf,
            epsilon: 8.0,
            epsilon_step: 2.0,
            iterations: 1,
            overshoot: 0.0,
            eta: 0.0,
            scale: InputScale::Byte,
        };
        match kind {
            AttackKind::Fgm => base,
            AttackKind::Bim => Self { iterations: 10, ..base },
            AttackKind::Pgd => Self { iterations: 20, ..base },
            AttackKind::DeepFool => Self { iterations: 100, overshoot: 1e-6, ..base },
            AttackKind::NewtonFool => Self { iterations: 100, eta: 0.01, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.epsilon, self.epsilon_step, self.overshoot, self.eta].iter().all(|v| v.is_finite());
        if !finite {
            bail_arg!("attack parameters must be finite");
        }
        match self.kind {
            AttackKind::Fgm | AttackKind::Bim | AttackKind::Pgd if self.epsilon < 0.0 => {
                bail_arg!("epsilon must be non-negative, got {}", self.epsilon)
            }
            AttackKind::Bim | AttackKind::Pgd if self.epsilon_step < 0.0 => {
                bail_arg!("epsilon_step must be non-negative, got {}", self.epsilon_step)
            }
            AttackKind::DeepFool if self.overshoot < 0.0 => bail_arg!("overshoot must be non-negative"),
            AttackKind::NewtonFool if self.eta < 0.0 => bail_arg!("eta must be non-negative"),
            _ if self.iterations == 0 => bail_arg!("iterations must be at least 1"),
            _ => Ok(()),
        }
    }

    fn unit(&self, v: f64) -> f64 {
        match self.scale {
            InputScale::Unit => v,
            InputScale::Byte => v / 255.0,
        }
    }

    /// Budget in unit pixel range.
    pub fn unit_epsilon(&self) -> f64 {
        self.unit(self.epsilon)
    }

    pub fn unit_epsilon_step(&self) -> f64 {
        self.unit(self.epsilon_step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    pub clean_pred: usize,
    pub adv_pred: usize,
    /// The adversarial sample is misclassified (`adv_pred ≠ y_true`).
    pub success: bool,
    /// Euclidean distance over the flattened pixels.
    pub l2: f64,
    /// `p_clean[y_true] − p_adv[y_true]`.
    pub confidence_delta: f64,
}

fn check_sample<C: Classifier + ?Sized>(clf: &C, x: &Tensor, y_true: usize) -> Result<()> {
    if x.rows() != 1 {
        bail_shape!("attacks take one sample at a time, got {:?}", x.shape());
    }
    if y_true >= clf.num_classes() {
        bail_arg!("label {} outside [0, {})", y_true, clf.num_classes());
    }
    if x.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail_arg!("attack input outside [0, 1]");
    }
    Ok(())
}

fn probs_of<C: Classifier + ?Sized>(clf: &C, x: &Tensor) -> Result<Vec<f64>> {
    let z = clf.logits(x)?;
    let mut p = vec![0.0; z.len()];
    softmax_row(z.data(), &mut p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attack forward pass"));
    }
    Ok(p)
}

fn finish<C: Classifier + ?Sized>(
    clf: &C,
    x0: &Tensor,
    adversarial: Tensor,
    y_true: usize,
    p_clean: &[f64],
) -> Result<AttackOutcome> {
    let p_adv = probs_of(clf, &adversarial)?;
    let adv_pred = argmax(&p_adv);
    let l2 = libm::sqrt(x0.data().iter().zip(adversarial.data()).map(|(a, b)| (a - b) * (a - b)).sum());
    Ok(AttackOutcome {
        clean_pred: argmax(p_clean),
        adv_pred,
        success: adv_pred != y_true,
        l2,
        confidence_delta: p_clean[y_true] - p_adv[y_true],
        adversarial,
    })
}

/// Input gradient of the cross-entropy against `y`.
fn loss_gradient<C: Classifier + ?Sized>(clf: &C, x: &Tensor, y: usize) -> Result<Tensor> {
    let k = clf.num_classes();
    let (_, g) = clf.logits_and_grad(x, &mut |z| {
        let mut d = vec![0.0; k];
        softmax_row(z.data(), &mut d);
        d[y] -= 1.0;
        d
    })?;
    if !g.all_finite() {
        return Err(Error::NonFinite("attack gradient"));
    }
    Ok(g)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One ascent step followed by projection onto the ε-ball around `x0` and
/// clipping to `[0, 1]`. FGM is exactly one call with `step = ε`.
fn ascent_step(x0: &[f64], x: &mut [f64], g: &[f64], step: f64, eps: f64, norm: Norm) {
    match norm {
        Norm::Linf => {
            for ((xi, &oi), &gi) in x.iter_mut().zip(x0).zip(g) {
                let v = (*xi + step * sign(gi)).clamp(oi - eps, oi + eps);
                *xi = v.clamp(0.0, 1.0);
            }
        }
        Norm::L2 => {
            let gn = libm::sqrt(g.iter().map(|v| v * v).sum());
            if gn > 0.0 {
                for (xi, &gi) in x.iter_mut().zip(g) {
                    *xi += step * gi / gn;
                }
            }
            let dn = libm::sqrt(x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum());
            let shrink = if dn > eps { eps / dn } else { 1.0 };
            for (xi, &oi) in x.iter_mut().zip(x0) {
                let v = if shrink < 1.0 { oi + (*xi - oi) * shrink } else { *xi };
                *xi = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn iterate<C: Classifier + ?Sized>(
    clf: &C,
    x0: &Tensor,
    start: Tensor,
    y: usize,
    step: f64,
    iterations: usize,
    spec: &AttackSpec,
) -> Result<Tensor> {
    let mut x = start;
    let eps = spec.unit_epsilon();
    for _ in 0..iterations {
        let g = loss_gradient(clf, &x, y)?;
        ascent_step(x0.data(), x.data_mut(), g.data(), step, eps, spec.norm);
    }
    Ok(x)
}

/// Single step of size ε along the sign (Linf) or direction (L2) of the
/// loss gradient.
pub fn fgm<C: Classifier + ?Sized>(clf: &C, x: &Tensor, y_true: usize, spec: &AttackSpec) -> Result<AttackOutcome> {
    spec.validate()?;
    check_sample(clf, x, y_true)?;
    let p = probs_of(clf, x)?;
    let eps = spec.unit_epsilon();
    let adv = iterate(clf, x, x.clone(), y_true, eps, 1, spec)?;
    finish(clf, x, adv, y_true, &p)
}

/// `iterations` steps of `epsilon_step`, each projected onto the ε-ball.
pub fn bim<C: Classifier + ?Sized>(clf: &C, x: &Tensor, y_true: usize, spec: &AttackSpec) -> Result<AttackOutcome> {
    spec.validate()?;
    check_sample(clf, x, y_true)?;
    let p = probs_of(clf, x)?;
    let adv = iterate(clf, x, x.clone(), y_true, spec.unit_epsilon_step(), spec.iterations, spec)?;
    finish(clf, x, adv, y_true, &p)
}

/// BIM from a uniformly random start inside the ε-ball.
pub fn pgd<C: Classifier + ?Sized>(
    clf: &C,
    x: &Tensor,
    y_true: usize,
    spec: &AttackSpec,
    seed: u64,
) -> Result<AttackOutcome> {
    spec.validate()?;
    check_sample(clf, x, y_true)?;
    let p = probs_of(clf, x)?;
    let eps = spec.unit_epsilon();
    let mut r = rng::seeded(seed);
    let mut start = x.clone();
    match spec.norm {
        Norm::Linf => {
            for v in start.data_mut() {
                *v = (*v + eps * (2.0 * r.random::<f64>() - 1.0)).clamp(0.0, 1.0);
            }
        }
        Norm::L2 => {
            // Uniform in the ball: Gaussian direction, radius ε·u^(1/d).
            let d = start.len();
            let dir: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let n = libm::sqrt(dir.iter().map(|v| v * v).sum());
            let radius = eps * libm::pow(r.random::<f64>(), 1.0 / d as f64);
            for (v, g) in start.data_mut().iter_mut().zip(&dir) {
                *v = (*v + radius * g / n).clamp(0.0, 1.0);
            }
        }
    }
    let adv = iterate(clf, x, start, y_true, spec.unit_epsilon_step(), spec.iterations, spec)?;
    finish(clf, x, adv, y_true, &p)
}

/// Rows of the logit Jacobian, `K × d`, from one backward pass over `K`
/// copies of the sample.
fn jacobian<C: Classifier + ?Sized>(clf: &C, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = clf.num_classes();
    let d = x.len();
    let copies: Vec<&Tensor> = (0..k).map(|_| x).collect();
    let batch = Tensor::concat_rows(&copies)?;
    let (logits, g) = clf.logits_and_grad(&batch, &mut |_| {
        let mut eye = vec![0.0; k * k];
        for i in 0..k {
            eye[i * k + i] = 1.0;
        }
        eye
    })?;
    if !g.all_finite() {
        return Err(Error::NonFinite("attack gradient"));
    }
    debug_assert_eq!(g.len(), k * d);
    Ok((logits.row(0).to_vec(), g.into_data()))
}

/// Minimal-perturbation search towards the closest linearised decision
/// boundary among all `K−1` competitors. The returned sample is
/// `clip(x + (1+overshoot)·r_total)`.
pub fn deepfool<C: Classifier + ?Sized>(
    clf: &C,
    x: &Tensor,
    y_true: usize,
    spec: &AttackSpec,
) -> Result<AttackOutcome> {
    spec.validate()?;
    check_sample(clf, x, y_true)?;
    let p = probs_of(clf, x)?;
    let k0 = argmax(&p);
    if k0 != y_true {
        return finish(clf, x, x.clone(), y_true, &p);
    }
    let k = clf.num_classes();
    let d = x.len();
    let scale = 1.0 + spec.overshoot;
    let mut r_tot = vec![0.0; d];
    let mut xi = x.clone();
    let mut adv = x.clone();
    for _ in 0..spec.iterations {
        let (f, jac) = jacobian(clf, &xi)?;
        let w0 = &jac[k0 * d..(k0 + 1) * d];
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for c in (0..k).filter(|&c| c != k0) {
            let w: Vec<f64> = jac[c * d..(c + 1) * d].iter().zip(w0).map(|(a, b)| a - b).collect();
            let wn2: f64 = w.iter().map(|v| v * v).sum();
            if wn2 == 0.0 {
                continue;
            }
            let fc = (f[c] - f[k0]).abs();
            let dist = fc / libm::sqrt(wn2);
            if best.as_ref().is_none_or(|(bd, _, _)| dist < *bd) {
                best = Some((dist, fc / wn2, w));
            }
        }
        let Some((_, coef, w)) = best else {
            break;
        };
        for (r, wi) in r_tot.iter_mut().zip(&w) {
            *r += coef * wi;
        }
        for ((a, o), r) in adv.data_mut().iter_mut().zip(x.data()).zip(&r_tot) {
            *a = (o + scale * r).clamp(0.0, 1.0);
        }
        if argmax(&probs_of(clf, &adv)?) != k0 {
            break;
        }
        for ((a, o), r) in xi.data_mut().iter_mut().zip(x.data()).zip(&r_tot) {
            *a = (o + r).clamp(0.0, 1.0);
        }
    }
    finish(clf, x, adv, y_true, &p)
}

/// Newton-style descent on the predicted-class probability `p_ŷ`:
/// `θ = min(η·‖x₀‖·‖∇p_ŷ‖, p_ŷ − 1/K)`, step `−θ·∇p_ŷ/‖∇p_ŷ‖²`, stopping as
/// soon as the prediction changes.
pub fn newtonfool<C: Classifier + ?Sized>(
    clf: &C,
    x: &Tensor,
    y_true: usize,
    spec: &AttackSpec,
) -> Result<AttackOutcome> {
    spec.validate()?;
    check_sample(clf, x, y_true)?;
    let p = probs_of(clf, x)?;
    let k0 = argmax(&p);
    if k0 != y_true {
        return finish(clf, x, x.clone(), y_true, &p);
    }
    let k = clf.num_classes();
    let norm_x0 = libm::sqrt(x.data().iter().map(|v| v * v).sum());
    let mut adv = x.clone();
    for _ in 0..spec.iterations {
        let mut score = 0.0;
        let mut pred = k0;
        let (_, g) = clf.logits_and_grad(&adv, &mut |z| {
            let mut q = vec![0.0; k];
            softmax_row(z.data(), &mut q);
            score = q[k0];
            pred = argmax(&q);
            // ∂p_ŷ/∂z = p_ŷ (e_ŷ − p)
            let mut d: Vec<f64> = q.iter().map(|v| -score * v).collect();
            d[k0] += score;
            d
        })?;
        if pred != k0 {
            break;
        }
        let gn2: f64 = g.data().iter().map(|v| v * v).sum();
        if gn2 == 0.0 || !gn2.is_finite() {
            break;
        }
        let theta = (spec.eta * norm_x0 * libm::sqrt(gn2)).min(score - 1.0 / k as f64);
        for (a, gi) in adv.data_mut().iter_mut().zip(g.data()) {
            *a = (*a - theta * gi / gn2).clamp(0.0, 1.0);
        }
    }
    finish(clf, x, adv, y_true, &p)
}

/// Dispatches on `spec.kind`. `seed` is only used by PGD.
pub fn attack<C: Classifier + ?Sized>(
    clf: &C,
    x: &Tensor,
    y_true: usize,
    spec: &AttackSpec,
    seed: u64,
) -> Result<AttackOutcome> {
    match spec.kind {
        AttackKind::Fgm => fgm(clf, x, y_true, spec),
        AttackKind::Bim => bim(clf, x, y_true, spec),
        AttackKind::Pgd => pgd(clf, x, y_true, spec, seed),
        AttackKind::DeepFool => deepfool(clf, x, y_true, spec),
        AttackKind::NewtonFool => newtonfool(clf, x, y_true, spec),
    }
}

/// One row of a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: usize,
    pub true_class: usize,
    pub clean_pred: usize,
    pub adv_pred: usize,
    pub l2: f64,
    pub confidence_delta: f64,
}

impl SampleResult {
    pub fn from_outcome(sample_id: usize, true_class: usize, o: &AttackOutcome) -> Self {
        Self {
            sample_id,
            true_class,
            clean_pred: o.clean_pred,
            adv_pred: o.adv_pred,
            l2: o.l2,
            confidence_delta: o.confidence_delta,
        }
    }
}

/// Seed of the PGD start for sample `sample_id`.
pub fn sample_seed(seed: u64, sample_id: usize) -> u64 {
    rng::derive(seed, sample_id as u64)
}

/// Attacks sample `id` of `images` (`M × …`).
pub fn attack_row<C: Classifier + ?Sized>(
    clf: &C,
    images: &Tensor,
    labels: &[usize],
    id: usize,
    spec: &AttackSpec,
    seed: u64,
) -> Result<SampleResult> {
    let x = images.select_rows(&[id])?;
    let o = attack(clf, &x, labels[id], spec, sample_seed(seed, id))?;
    Ok(SampleResult::from_outcome(id, labels[id], &o))
}

/// Sequential campaign over the listed samples.
pub fn run_campaign<C: Classifier + ?Sized>(
    clf: &C,
    images: &Tensor,
    labels: &[usize],
    ids: &[usize],
    spec: &AttackSpec,
    seed: u64,
) -> Result<Vec<SampleResult>> {
    if labels.len() != images.rows() {
        bail_shape!("{} labels for {} images", labels.len(), images.rows());
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= images.rows()) {
        bail_arg!("sample id {} outside [0, {})", bad, images.rows());
    }
    ids.iter().map(|&i| attack_row(clf, images, labels, i, spec, seed)).collect()
}

fn per_class(values: &[f64], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    if values.len() != labels.len() {
        bail_shape!("{} values for {} labels", values.len(), labels.len());
    }
    let mut sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for (&v, &y) in values.iter().zip(labels) {
        if y >= classes {
            bail_arg!("label {} outside [0, {})", y, classes);
        }
        sum[y] += v;
        count[y] += 1;
    }
    if let Some(c) = count.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    Ok(sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect())
}

/// Mean L2 per true class, successful and unsuccessful attacks alike.
pub fn mean_l2(l2: &[f64], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    per_class(l2, labels, classes)
}

/// Fraction of samples whose adversarial prediction differs from the label.
pub fn adversarial_accuracy(adv_pred: &[usize], labels: &[usize]) -> Result<f64> {
    if adv_pred.len() != labels.len() || labels.is_empty() {
        bail_shape!("{} predictions for {} labels", adv_pred.len(), labels.len());
    }
    Ok(adv_pred.iter().zip(labels).filter(|(p, y)| p != y).count() as f64 / labels.len() as f64)
}

/// Mean drop of the true-class probability per true class.
pub fn confidence_score(clean: &Tensor, adversarial: &Tensor, labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    if clean.shape() != adversarial.shape() || clean.rows() != labels.len() {
        bail_shape!("probabilities {:?} / {:?} for {} labels", clean.shape(), adversarial.shape(), labels.len());
    }
    let deltas: Vec<f64> = clean
        .iter_rows()
        .zip(adversarial.iter_rows())
        .zip(labels)
        .map(|((c, a), &y)| c.get(y).zip(a.get(y)).map_or(f64::NAN, |(c, a)| c - a))
        .collect();
    if deltas.iter().any(|v| v.is_nan()) {
        bail_arg!("label outside the probability width {}", clean.row_len());
    }
    per_class(&deltas, labels, classes)
}

/// Per-class and overall figures for one (classifier, attack) campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attack: AttackSpec,
    pub samples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    pub mean_l2: f64,
    pub per_class_mean_l2: Vec<f64>,
    pub per_class_confidence: Vec<f64>,
    pub per_class_adversarial_accuracy: Vec<f64>,
}

pub fn summarize_campaign(spec: &AttackSpec, results: &[SampleResult], classes: usize) -> Result<CampaignSummary> {
    if results.is_empty() {
        bail_arg!("empty campaign");
    }
    let labels: Vec<usize> = results.iter().map(|r| r.true_class).collect();
    let l2: Vec<f64> = results.iter().map(|r| r.l2).collect();
    let conf: Vec<f64> = results.iter().map(|r| r.confidence_delta).collect();
    let fooled: Vec<f64> = results.iter().map(|r| f64::from(u8::from(r.adv_pred != r.true_class))).collect();
    let adv: Vec<usize> = results.iter().map(|r| r.adv_pred).collect();
    let n = results.len() as f64;
    Ok(CampaignSummary {
        attack: *spec,
        samples: results.len(),
        clean_accuracy: results.iter().filter(|r| r.clean_pred == r.true_class).count() as f64 / n,
        adversarial_accuracy: adversarial_accuracy(&adv, &labels)?,
        mean_l2: l2.iter().sum::<f64>() / n,
        per_class_mean_l2: mean_l2(&l2, &labels, classes)?,
        per_class_confidence: per_class(&conf, &labels, classes)?,
        per_class_adversarial_accuracy: per_class(&fooled, &labels, classes)?,
    })
}

impl core::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.id())
    }
}

impl core::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack {s:?}")))
    }
}

#[cfg(test)]
mod tests;
