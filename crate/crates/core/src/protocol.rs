//! The leave-one-class-out experiment: one standard `N`-class network plus
//! one network per withheld class, and the paired soft-label sets each
//! excluded class produces.
//!
//! Seeds: the network that withholds class `c` uses `seed + c` for both its
//! initialisation and its shuffling stream; the standard network uses
//! `seed + N`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{exclude_class, Dataset, ExclusionSplit};
use crate::defence::{gaussian_augment_slice, DefenceSpec};
use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::nn::{argmax, predict_soft, train_observed, Architecture, Network, TrainConfig, TrainObserver};
use crate::rawzero::{am, dbm, summarize, ClassMetrics, GroundTruthSet, MetricSummary, SoftLabelSet};
use crate::rng;
use crate::tensor::Tensor;

/// Rows per inference chunk.
pub const INFERENCE_CHUNK: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub defence: Option<DefenceSpec>,
}

impl ProtocolConfig {
    pub fn new(architecture: Architecture, train: TrainConfig, defence: Option<DefenceSpec>) -> Self {
        Self { architecture, train, defence }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(d) = &self.defence {
            d.validate()?;
        }
        Ok(())
    }
}

struct DefendedBatches {
    encode: Option<DefenceSpec>,
    noise: Option<(Normal<f64>, rng::Rng)>,
}

impl DefendedBatches {
    fn new(defence: Option<DefenceSpec>, seed: u64) -> Result<Self> {
        let encode = defence.filter(|d| d.phases().inference_input);
        let noise = match defence {
            Some(DefenceSpec::GaussianAugment { sigma }) => {
                let normal = Normal::new(0.0, sigma)
                    .map_err(|_| Error::InvalidArgument(alloc::format!("bad noise sigma {sigma}")))?;
                Some((normal, rng::stream(seed, 2, 0)))
            }
            _ => None,
        };
        Ok(Self { encode, noise })
    }
}

impl TrainObserver for DefendedBatches {
    fn prepare_batch(&mut self, batch: Tensor, _step: u64) -> Result<Tensor> {
        let mut batch = match &self.encode {
            Some(d) => d.transform_inputs(&batch)?,
            None => batch,
        };
        if let Some((normal, r)) = &mut self.noise {
            gaussian_augment_slice(batch.data_mut(), normal, r);
        }
        Ok(batch)
    }
}

/// Trains a fresh network of `cfg.architecture` on images `M × H × W × C`
/// with the defence's training-time transforms.
pub fn fit(images: &Tensor, labels: &[usize], classes: usize, cfg: &ProtocolConfig, seed: u64) -> Result<Network> {
    cfg.validate()?;
    if images.shape().len() != 4 {
        bail_shape!("expected M × H × W × C images, got {:?}", images.shape());
    }
    let shape = crate::nn::FeatureShape::Image {
        height: images.shape()[1],
        width: images.shape()[2],
        channels: images.shape()[3],
    };
    let shape = cfg.defence.map_or(shape, |d| d.encoded_shape(shape));
    let net = cfg.architecture.build(shape, classes, seed)?;
    let mut targets = crate::data::one_hot(labels, classes);
    if let Some(d) = &cfg.defence {
        targets = d.transform_targets(&targets)?;
    }
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let mut batches = DefendedBatches::new(cfg.defence, seed)?;
    train_observed(net, images, &targets, &train, &mut batches)
}

/// Class probabilities with the defence's inference transform applied to
/// every chunk.
pub fn predict(net: &Network, images: &Tensor, defence: Option<&DefenceSpec>) -> Result<Tensor> {
    let encode = defence.filter(|d| d.phases().inference_input);
    let k = net.output_dim();
    let mut out = Vec::with_capacity(images.rows() * k);
    let mut start = 0;
    while start < images.rows() {
        let end = (start + INFERENCE_CHUNK).min(images.rows());
        let idx: Vec<usize> = (start..end).collect();
        let mut part = images.select_rows(&idx)?;
        if let Some(d) = encode {
            part = d.transform_inputs(&part)?;
        }
        out.extend_from_slice(predict_soft(net, &part)?.data());
        start = end;
    }
    Tensor::new(alloc::vec![images.rows(), k], out)
}

pub fn accuracy(net: &Network, ds: &Dataset, defence: Option<&DefenceSpec>) -> Result<f64> {
    let probs = predict(net, ds.images(), defence)?;
    let hits = probs.iter_rows().zip(ds.labels()).filter(|(p, &y)| argmax(p) == y).count();
    Ok(hits as f64 / ds.len() as f64)
}

pub fn standard_seed(seed: u64, n_classes: usize) -> u64 {
    rng::derive(seed, n_classes as u64)
}

pub fn class_seed(seed: u64, class: usize) -> u64 {
    rng::derive(seed, class as u64)
}

/// The `N`-class reference network.
pub fn train_standard(train: &Dataset, cfg: &ProtocolConfig) -> Result<Network> {
    let n = train.num_classes();
    fit(train.images(), train.labels(), n, cfg, standard_seed(cfg.train.seed, n))
}

/// The network that never sees `split.excluded_class`.
pub fn train_excluded(split: &ExclusionSplit, cfg: &ProtocolConfig) -> Result<Network> {
    let ds = &split.retained_train;
    fit(ds.images(), ds.labels(), ds.num_classes(), cfg, class_seed(cfg.train.seed, split.excluded_class))
}

/// Everything one withheld class contributes.
#[derive(Clone, Debug)]
pub struct ClassRun {
    pub excluded_class: usize,
    pub network: Network,
    pub soft_labels: SoftLabelSet,
    pub ground_truth: GroundTruthSet,
    /// Accuracy of the leave-one-out network on the retained test samples.
    pub retained_accuracy: f64,
}

impl ClassRun {
    pub fn metrics(&self) -> Result<ClassMetrics> {
        let n = self.soft_labels.num_classes();
        Ok(ClassMetrics {
            class: self.excluded_class,
            dbm: dbm(&self.soft_labels),
            am: am(&self.soft_labels, &self.ground_truth, n)?,
        })
    }
}

/// Builds the paired sets from an already trained leave-one-out network.
pub fn collect(
    split: &ExclusionSplit,
    excluded_net: &Network,
    standard: &Network,
    defence: Option<&DefenceSpec>,
) -> Result<(SoftLabelSet, GroundTruthSet)> {
    let soft = predict(excluded_net, &split.unknown_samples, defence)?;
    let soft = SoftLabelSet::new(split.excluded_class, soft, split.retained_classes())?;
    let full = predict(standard, &split.unknown_samples, defence)?;
    let truth = GroundTruthSet::from_standard_probs(split.excluded_class, &full)?;
    Ok((soft, truth))
}

/// Trains and evaluates the network that withholds `class`. Failures are
/// wrapped with the class id.
pub fn run_class(
    train: &Dataset,
    test: &Dataset,
    standard: &Network,
    class: usize,
    cfg: &ProtocolConfig,
) -> Result<ClassRun> {
    let wrap = |e: Error| Error::ProtocolClass { class, source: Box::new(e) };
    let split = exclude_class(train, test, class).map_err(wrap)?;
    let network = train_excluded(&split, cfg).map_err(wrap)?;
    let (soft_labels, ground_truth) = collect(&split, &network, standard, cfg.defence.as_ref()).map_err(wrap)?;
    let retained_accuracy = accuracy(&network, &split.retained_test, cfg.defence.as_ref()).map_err(wrap)?;
    Ok(ClassRun { excluded_class: class, network, soft_labels, ground_truth, retained_accuracy })
}

#[derive(Clone, Debug)]
pub struct ProtocolOutcome {
    pub standard: Network,
    pub standard_accuracy: f64,
    /// Ordered by excluded class.
    pub runs: Vec<ClassRun>,
}

impl ProtocolOutcome {
    pub fn metrics(&self) -> Result<MetricSummary> {
        summarize(self.runs.iter().map(ClassRun::metrics).collect::<Result<_>>()?)
    }
}

/// Checks the preconditions shared by every protocol entry point.
pub fn check_inputs(train: &Dataset, test: &Dataset, cfg: &ProtocolConfig) -> Result<()> {
    cfg.validate()?;
    let n = train.num_classes();
    if n < 3 {
        bail_arg!("the protocol needs at least 3 classes, got {}", n);
    }
    if test.num_classes() != n {
        bail_arg!("train has {} classes, test has {}", n, test.num_classes());
    }
    train.ensure_all_classes_present()
}

/// Sequential driver: `N + 1` trainings.
pub fn run_protocol(train: &Dataset, test: &Dataset, cfg: &ProtocolConfig) -> Result<ProtocolOutcome> {
    check_inputs(train, test, cfg)?;
    let standard = train_standard(train, cfg)?;
    let standard_accuracy = accuracy(&standard, test, cfg.defence.as_ref())?;
    let runs =
        (0..train.num_classes()).map(|c| run_class(train, test, &standard, c, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(ProtocolOutcome { standard, standard_accuracy, runs })
}
