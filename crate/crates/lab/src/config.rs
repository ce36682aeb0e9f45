//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "seed": 0,
//!   "classifier": "mlp",
//!   "dataset": { "kind": "fashion_mnist", "dir": "../data/fashion-mnist" },
//!   "architecture": { "kind": "mlp" },
//!   "train": { "epochs": 20, "batch_size": 64, "learning_rate": 0.001 },
//!   "defence": null,
//!   "attacks": [ { "preset": "fashion_mnist", "kind": "fgm" } ],
//!   "attack_samples": null,
//!   "projections": ["mds", "isomap", "tsne", "spectral"],
//!   "projection": { "cap": 1000, "neighbors": 10 },
//!   "out_dir": "out/fmnist-mlp"
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. `seed` is mandatory and replaces `train.seed`. See README.md for
//! the full schema.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rawzero_core::attack::{AttackKind, AttackSpec};
use rawzero_core::data::{apply_superclasses, synthetic_blobs, Dataset, Split, SuperClassConfig};
use rawzero_core::defence::DefenceSpec;
use rawzero_core::nn::{Architecture, TrainConfig};
use rawzero_core::projection::{ProjectionConfig, ProjectionMethod};
use rawzero_core::protocol::ProtocolConfig;
use rawzero_core::rng;
use serde::{Deserialize, Serialize};

use crate::csvdata::{load_csv, CsvLayout};
use crate::error::{config_err, LabError, Result};
use crate::{cifar, idx};

pub const FASHION_MNIST_CLASSES: [&str; 10] =
    ["T-shirt/top", "Trouser", "Pullover", "Dress", "Coat", "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Directory with the four standard Fashion-MNIST IDX files.
    FashionMnist {
        dir: PathBuf,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        height: usize,
        width: usize,
        #[serde(default = "one")]
        channels: usize,
    },
    /// Directory with the CIFAR-10 binary batches.
    Cifar10 {
        dir: PathBuf,
    },
    /// Gaussian blobs; train uses the global seed, test a derived one.
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub source: DatasetSource,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    /// Super-class grouping file (`{"groups": [{"name", "members"}]}`).
    #[serde(default)]
    pub superclasses: Option<PathBuf>,
    /// Keep only the first `n` samples of each class (storage order).
    #[serde(default)]
    pub max_train_per_class: Option<usize>,
    #[serde(default)]
    pub max_test_per_class: Option<usize>,
}

/// An attack as written in the config: either explicit parameters or a
/// named preset whose fields may be overridden.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackEntry {
    pub name: String,
    pub spec: AttackSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    FashionMnist,
    Cifar,
}

fn resolve_attack(mut value: serde_json::Value) -> Result<AttackEntry> {
    let obj = value.as_object_mut().ok_or_else(|| config_err!("each attack must be a JSON object"))?;
    let name = match obj.remove("name") {
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other) => return Err(config_err!("attack name must be a string, got {other}")),
        None => None,
    };
    if let Some(preset) = obj.remove("preset") {
        let preset: Preset = serde_json::from_value(preset).map_err(|e| config_err!("attack preset: {e}"))?;
        let kind: AttackKind = obj
            .get("kind")
            .cloned()
            .ok_or_else(|| config_err!("a preset attack needs a kind"))
            .and_then(|k| serde_json::from_value(k).map_err(|e| config_err!("attack kind: {e}")))?;
        let base = match preset {
            Preset::FashionMnist => AttackSpec::fashion_mnist(kind),
            Preset::Cifar => AttackSpec::cifar(kind),
        };
        let mut merged = serde_json::to_value(base).expect("spec serialises");
        let target = merged.as_object_mut().expect("spec is an object");
        for (k, v) in obj.iter() {
            target.insert(k.clone(), v.clone());
        }
        value = merged;
    }
    let spec: AttackSpec = serde_json::from_value(value).map_err(|e| config_err!("attack: {e}"))?;
    spec.validate()?;
    Ok(AttackEntry { name: name.unwrap_or_else(|| spec.kind.id().to_string()), spec })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    #[serde(default)]
    classifier: Option<String>,
    #[serde(default)]
    dataset: Option<DatasetSpec>,
    architecture: Architecture,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    defence: Option<DefenceSpec>,
    #[serde(default)]
    attacks: Vec<serde_json::Value>,
    #[serde(default)]
    attack_samples: Option<usize>,
    #[serde(default)]
    projections: Vec<ProjectionMethod>,
    #[serde(default)]
    projection: ProjectionConfig,
    #[serde(default = "default_out")]
    out_dir: PathBuf,
    #[serde(default)]
    soft_labels_dir: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Label used in reports; defaults to the architecture id.
    pub classifier: String,
    /// Required unless every command reads injected soft labels.
    pub dataset: Option<DatasetSpec>,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub defence: Option<DefenceSpec>,
    pub attacks: Vec<AttackEntry>,
    /// Attack only the first `n` test samples.
    pub attack_samples: Option<usize>,
    pub projections: Vec<ProjectionMethod>,
    pub projection: ProjectionConfig,
    pub out_dir: PathBuf,
    /// Read soft-label CSVs from here instead of running the networks.
    pub soft_labels_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl DatasetSpec {
    fn resolve_paths(&mut self, base: &Path) {
        match &mut self.source {
            DatasetSource::FashionMnist { dir } | DatasetSource::Cifar10 { dir } => *dir = resolve(base, dir),
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    *p = resolve(base, p);
                }
            }
            DatasetSource::Csv { train, test, .. } => {
                *train = resolve(base, train);
                *test = resolve(base, test);
            }
            DatasetSource::Synthetic { .. } => {}
        }
        if let Some(p) = &mut self.superclasses {
            *p = resolve(base, p);
        }
    }

    /// Every file the loader will open.
    pub fn paths(&self) -> Vec<PathBuf> {
        let mut out = match &self.source {
            DatasetSource::FashionMnist { dir } => fashion_mnist_files(dir).to_vec(),
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels } => {
                vec![train_images.clone(), train_labels.clone(), test_images.clone(), test_labels.clone()]
            }
            DatasetSource::Csv { train, test, .. } => vec![train.clone(), test.clone()],
            DatasetSource::Cifar10 { dir } => {
                let mut v: Vec<_> = cifar::TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
                v.push(dir.join(cifar::TEST_FILE));
                v
            }
            DatasetSource::Synthetic { .. } => Vec::new(),
        };
        out.extend(self.superclasses.iter().cloned());
        out
    }

    /// Loads train and test splits, then applies super-classes and the
    /// per-class caps.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let names = self.class_names.clone();
        let (train, test) = match &self.source {
            DatasetSource::FashionMnist { dir } => {
                let [ti, tl, vi, vl] = fashion_mnist_files(dir);
                let names = names.or_else(|| Some(FASHION_MNIST_CLASSES.map(String::from).to_vec()));
                (idx::load_idx(&ti, &tl, names.clone(), Split::Train)?, idx::load_idx(&vi, &vl, names, Split::Test)?)
            }
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels } => (
                idx::load_idx(train_images, train_labels, names.clone(), Split::Train)?,
                idx::load_idx(test_images, test_labels, names, Split::Test)?,
            ),
            DatasetSource::Csv { train, test, height, width, channels } => {
                let layout = CsvLayout { height: *height, width: *width, channels: *channels };
                (load_csv(train, layout, names.clone(), Split::Train)?, load_csv(test, layout, names, Split::Test)?)
            }
            DatasetSource::Cifar10 { dir } => {
                let (mut a, mut b) = cifar::load_cifar10(dir)?;
                if let Some(n) = names {
                    a = Dataset::new(a.images().clone(), a.labels().to_vec(), n.clone(), Split::Train)?;
                    b = Dataset::new(b.images().clone(), b.labels().to_vec(), n, Split::Test)?;
                }
                (a, b)
            }
            DatasetSource::Synthetic { classes, train_per_class, test_per_class, dim, spread } => {
                let a = synthetic_blobs(*classes, *train_per_class, *dim, *spread, seed, Split::Train)?;
                let b = synthetic_blobs(*classes, *test_per_class, *dim, *spread, rng::derive(seed, 1), Split::Test)?;
                match names {
                    Some(n) => (
                        Dataset::new(a.images().clone(), a.labels().to_vec(), n.clone(), Split::Train)?,
                        Dataset::new(b.images().clone(), b.labels().to_vec(), n, Split::Test)?,
                    ),
                    None => (a, b),
                }
            }
        };
        if train.num_classes() != test.num_classes() {
            return Err(config_err!("train has {} classes but test has {}", train.num_classes(), test.num_classes()));
        }
        let (train, test) = match &self.superclasses {
            Some(p) => {
                let groups: SuperClassConfig = crate::artifacts::read_json(p)?;
                (apply_superclasses(&train, &groups)?, apply_superclasses(&test, &groups)?)
            }
            None => (train, test),
        };
        Ok((cap_per_class(train, self.max_train_per_class)?, cap_per_class(test, self.max_test_per_class)?))
    }
}

fn fashion_mnist_files(dir: &Path) -> [PathBuf; 4] {
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .map(|f| dir.join(f))
}

fn cap_per_class(ds: Dataset, cap: Option<usize>) -> Result<Dataset> {
    let Some(cap) = cap else { return Ok(ds) };
    let mut seen = vec![0usize; ds.num_classes()];
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| {
            let c = &mut seen[ds.labels()[i]];
            *c += 1;
            *c <= cap
        })
        .collect();
    Ok(ds.subset(&keep)?)
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| config_err!("{e}"))?;
        let mut dataset = raw.dataset;
        if let Some(d) = &mut dataset {
            d.resolve_paths(base);
        }
        let attacks = raw.attacks.into_iter().map(resolve_attack).collect::<Result<Vec<_>>>()?;
        let mut names = BTreeSet::new();
        for a in &attacks {
            if !names.insert(a.name.as_str()) {
                return Err(config_err!("two attacks are named {:?}; give them distinct \"name\" fields", a.name));
            }
            if a.name.is_empty() || !a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(config_err!("attack name {:?} must be non-empty [A-Za-z0-9_-]", a.name));
            }
        }
        let cfg = Self {
            seed: raw.seed,
            classifier: raw.classifier.unwrap_or_else(|| raw.architecture.id()),
            dataset,
            architecture: raw.architecture,
            train: TrainConfig { seed: raw.seed, ..raw.train },
            defence: raw.defence,
            attacks,
            attack_samples: raw.attack_samples,
            projections: raw.projections,
            projection: raw.projection,
            out_dir: resolve(base, &raw.out_dir),
            soft_labels_dir: raw.soft_labels_dir.map(|p| resolve(base, &p)),
        };
        cfg.protocol().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Replaces the global seed (and the training seed derived from it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig::new(self.architecture.clone(), self.train.clone(), self.defence)
    }

    pub fn dataset(&self) -> Result<&DatasetSpec> {
        self.dataset.as_ref().ok_or_else(|| config_err!("this command needs a \"dataset\" section"))
    }

    /// Checks that every referenced input path exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut paths = self.dataset.as_ref().map(DatasetSpec::paths).unwrap_or_default();
        paths.extend(self.soft_labels_dir.iter().cloned());
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(config_err!("{} does not exist", p.display())),
            None => Ok(()),
        }
    }

    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        self.check_paths()?;
        self.dataset()?.load(self.seed)
    }

    /// Identifies everything that determines the trained networks; stored in
    /// checkpoints so stale ones are retrained.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&(&self.dataset, &self.architecture, &self.train, &self.defence, self.seed))
            .expect("config serialises")
    }
}
