//! Labelled image collections, leave-one-class-out splits and super-class
//! grouping.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::nn::FeatureShape;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Images `M × H × W × C` with pixels in `[0, 1]` and labels in `[0, N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
    split: Split,
    class_counts: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_names: Vec<String>, split: Split) -> Result<Self> {
        if images.shape().len() != 4 {
            bail_shape!("images must be M×H×W×C, got {:?}", images.shape());
        }
        if images.rows() != labels.len() {
            bail_shape!("{} images but {} labels", images.rows(), labels.len());
        }
        if class_names.is_empty() {
            bail_arg!("a dataset needs at least one class");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            bail_arg!("label {} outside [0, {})", bad, class_names.len());
        }
        if let Some(p) = images.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail_arg!("pixel value {} outside [0, 1]", p);
        }
        let mut class_counts = vec![0; class_names.len()];
        for &l in &labels {
            class_counts[l] += 1;
        }
        Ok(Self { images, labels, class_names, split, class_counts })
    }

    /// Names `class_0 … class_{n-1}`.
    pub fn default_class_names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("class_{i}")).collect()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// (height, width, channels).
    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn feature_shape(&self) -> FeatureShape {
        let (height, width, channels) = self.image_dims();
        FeatureShape::Image { height, width, channels }
    }

    /// Indices of the samples carrying `class`, in storage order.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect()
    }

    /// One-hot targets `M × N`.
    pub fn one_hot(&self) -> Tensor {
        one_hot(&self.labels, self.num_classes())
    }

    /// Requires every class to have at least one sample.
    pub fn ensure_all_classes_present(&self) -> Result<()> {
        match self.class_counts.iter().position(|&c| c == 0) {
            Some(c) => Err(Error::EmptyClass(c)),
            None => Ok(()),
        }
    }

    /// Keeps the listed samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.images.select_rows(indices)?, labels, self.class_names.clone(), self.split)
    }

    /// Replaces the pixels (same sample count and labels), e.g. after a
    /// defence transform. Pixel range is re-validated.
    pub fn with_images(&self, images: Tensor) -> Result<Self> {
        Self::new(images, self.labels.clone(), self.class_names.clone(), self.split)
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = vec![0.0; labels.len() * classes];
    for (row, &l) in t.chunks_exact_mut(classes).zip(labels) {
        row[l] = 1.0;
    }
    Tensor::from_parts(vec![labels.len(), classes], t)
}

/// Result of withholding one class.
#[derive(Clone, Debug)]
pub struct ExclusionSplit {
    /// Training samples of the retained classes, labels compacted to
    /// `[0, N−1)`.
    pub retained_train: Dataset,
    /// Test samples of the retained classes, same relabelling.
    pub retained_test: Dataset,
    /// Every sample of the excluded class: training split first, then test,
    /// each in storage order.
    pub unknown_samples: Tensor,
    /// Where each unknown sample came from.
    pub unknown_sources: Vec<(Split, usize)>,
    pub excluded_class: usize,
    /// `label_map[old] = Some(new)` for retained classes, `None` for the
    /// excluded one. Order preserving.
    pub label_map: Vec<Option<usize>>,
}

impl ExclusionSplit {
    /// Original class ids of the retained classes, indexed by new label.
    pub fn retained_classes(&self) -> Vec<usize> {
        retained_classes(self.label_map.len(), self.excluded_class)
    }
}

pub fn retained_classes(n: usize, excluded: usize) -> Vec<usize> {
    (0..n).filter(|&c| c != excluded).collect()
}

/// Withholds `class_id` from training and pools its samples from both
/// splits.
pub fn exclude_class(train: &Dataset, test: &Dataset, class_id: usize) -> Result<ExclusionSplit> {
    let n = train.num_classes();
    if test.num_classes() != n {
        bail_arg!("train has {} classes, test has {}", n, test.num_classes());
    }
    if train.image_dims() != test.image_dims() {
        bail_shape!("train images {:?} vs test images {:?}", train.image_dims(), test.image_dims());
    }
    if class_id >= n {
        bail_arg!("class {} outside [0, {})", class_id, n);
    }
    if n < 2 {
        bail_arg!("excluding a class needs at least two classes");
    }
    let label_map: Vec<Option<usize>> =
        (0..n).map(|c| if c == class_id { None } else { Some(if c < class_id { c } else { c - 1 }) }).collect();
    let names: Vec<String> =
        train.class_names().iter().enumerate().filter(|(c, _)| *c != class_id).map(|(_, s)| s.clone()).collect();

    let relabel = |ds: &Dataset| -> Result<Dataset> {
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] != class_id).collect();
        if keep.is_empty() {
            bail_arg!("no samples left after excluding class {}", class_id);
        }
        let labels = keep.iter().map(|&i| label_map[ds.labels[i]].unwrap()).collect();
        Dataset::new(ds.images.select_rows(&keep)?, labels, names.clone(), ds.split)
    };

    let from_train = train.indices_of(class_id);
    let from_test = test.indices_of(class_id);
    if from_train.is_empty() && from_test.is_empty() {
        return Err(Error::EmptyClass(class_id));
    }
    let mut parts = Vec::new();
    let a;
    let b;
    if !from_train.is_empty() {
        a = train.images.select_rows(&from_train)?;
        parts.push(&a);
    }
    if !from_test.is_empty() {
        b = test.images.select_rows(&from_test)?;
        parts.push(&b);
    }
    let unknown_samples = Tensor::concat_rows(&parts)?;
    let unknown_sources =
        from_train.iter().map(|&i| (Split::Train, i)).chain(from_test.iter().map(|&i| (Split::Test, i))).collect();

    Ok(ExclusionSplit {
        retained_train: relabel(train)?,
        retained_test: relabel(test)?,
        unknown_samples,
        unknown_sources,
        excluded_class: class_id,
        label_map,
    })
}

/// Coarse classes built from groups of source classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperClassConfig {
    pub groups: Vec<SuperClass>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperClass {
    pub name: String,
    pub members: Vec<usize>,
}

impl SuperClassConfig {
    pub fn validate(&self, source_classes: usize) -> Result<()> {
        if self.groups.is_empty() {
            bail_arg!("super-class config has no groups");
        }
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if g.members.is_empty() {
                bail_arg!("super-class '{}' has no members", g.name);
            }
            for &m in &g.members {
                if m >= source_classes {
                    bail_arg!("super-class '{}' lists class {} but the source has {}", g.name, m, source_classes);
                }
                if !seen.insert(m) {
                    bail_arg!("class {} appears in more than one super-class", m);
                }
            }
        }
        Ok(())
    }
}

/// Relabels samples to their group index and drops unlisted classes.
pub fn apply_superclasses(ds: &Dataset, cfg: &SuperClassConfig) -> Result<Dataset> {
    cfg.validate(ds.num_classes())?;
    let mut group_of = vec![None; ds.num_classes()];
    for (g, sc) in cfg.groups.iter().enumerate() {
        for &m in &sc.members {
            group_of[m] = Some(g);
        }
    }
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| group_of[ds.labels[i]].is_some()).collect();
    if keep.is_empty() {
        bail_arg!("no samples belong to any super-class");
    }
    let labels = keep.iter().map(|&i| group_of[ds.labels[i]].unwrap()).collect();
    let names = cfg.groups.iter().map(|g| g.name.clone()).collect();
    Dataset::new(ds.images.select_rows(&keep)?, labels, names, ds.split)
}

/// Gaussian clusters around fixed class centres, clipped to `[0, 1]`.
///
/// Centre of class `c`, coordinate `j`: `0.5 + 0.35·cos(2πc/k + jπ/2)`, so
/// the first two coordinates place the classes on a circle. Images are
/// shaped `1 × dim × 1`; samples are grouped by class.
pub fn synthetic_blobs(
    k_classes: usize,
    n_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if k_classes == 0 || n_per_class == 0 || dim == 0 {
        bail_arg!("synthetic blobs need positive class count, samples and dimension");
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        bail_arg!("spread must be non-negative, got {}", spread);
    }
    let centre = |c: usize, j: usize| {
        let angle = 2.0 * core::f64::consts::PI * c as f64 / k_classes as f64 + j as f64 * core::f64::consts::FRAC_PI_2;
        0.5 + 0.35 * libm::cos(angle)
    };
    let mut r = rng::seeded(seed);
    let mut data = Vec::with_capacity(k_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(k_classes * n_per_class);
    for c in 0..k_classes {
        for _ in 0..n_per_class {
            for j in 0..dim {
                let z: f64 = StandardNormal.sample(&mut r);
                data.push((centre(c, j) + spread * z).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    let images = Tensor::new(vec![k_classes * n_per_class, 1, dim, 1], data)?;
    Dataset::new(images, labels, Dataset::default_class_names(k_classes), split)
}
