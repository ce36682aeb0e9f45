//! Input and label transforms used as defences: bit-depth squeezing,
//! median smoothing, label smoothing, Gaussian augmentation and
//! thermometer encoding.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_shape, Result};
use crate::nn::FeatureShape;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenceSpec {
    FeatureSqueeze { bits: u32 },
    SpatialSmooth { window: usize },
    LabelSmooth { alpha: f64 },
    GaussianAugment { sigma: f64 },
    Thermometer { levels: usize },
}

/// Where a defence acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Phases {
    pub train_input: bool,
    pub train_label: bool,
    pub inference_input: bool,
}

impl DefenceSpec {
    pub const DEFAULT_SQUEEZE_BITS: u32 = 4;
    pub const DEFAULT_SMOOTH_WINDOW: usize = 3;
    pub const DEFAULT_LABEL_ALPHA: f64 = 0.1;
    pub const DEFAULT_NOISE_SIGMA: f64 = 1.0;
    pub const DEFAULT_LEVELS: usize = 10;

    pub fn id(&self) -> &'static str {
        match self {
            DefenceSpec::FeatureSqueeze { .. } => "fs",
            DefenceSpec::SpatialSmooth { .. } => "ss",
            DefenceSpec::LabelSmooth { .. } => "ls",
            DefenceSpec::GaussianAugment { .. } => "gaug",
            DefenceSpec::Thermometer { .. } => "te",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DefenceSpec::FeatureSqueeze { bits } if !(1..=8).contains(&bits) => {
                bail_arg!("feature squeeze bits must lie in [1, 8], got {}", bits)
            }
            DefenceSpec::SpatialSmooth { window } if window < 3 || window % 2 == 0 => {
                bail_arg!("median window must be odd and at least 3, got {}", window)
            }
            DefenceSpec::LabelSmooth { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                bail_arg!("label smoothing alpha must lie in (0, 1), got {}", alpha)
            }
            DefenceSpec::GaussianAugment { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                bail_arg!("noise sigma must be positive, got {}", sigma)
            }
            DefenceSpec::Thermometer { levels } if levels < 2 => {
                bail_arg!("thermometer needs at least 2 levels, got {}", levels)
            }
            _ => Ok(()),
        }
    }

    pub fn phases(&self) -> Phases {
        match self {
            DefenceSpec::FeatureSqueeze { .. }
            | DefenceSpec::SpatialSmooth { .. }
            | DefenceSpec::Thermometer { .. } => {
                Phases { train_input: true, train_label: false, inference_input: true }
            }
            DefenceSpec::LabelSmooth { .. } => Phases { train_input: false, train_label: true, inference_input: false },
            DefenceSpec::GaussianAugment { .. } => {
                Phases { train_input: true, train_label: false, inference_input: false }
            }
        }
    }

    /// Shape the network sees after the deterministic input transform.
    pub fn encoded_shape(&self, input: FeatureShape) -> FeatureShape {
        match (*self, input) {
            (DefenceSpec::Thermometer { levels }, FeatureShape::Image { height, width, channels }) => {
                FeatureShape::Image { height, width, channels: channels * levels }
            }
            (DefenceSpec::Thermometer { levels }, FeatureShape::Flat(n)) => FeatureShape::Flat(n * levels),
            _ => input,
        }
    }

    /// Deterministic per-image transform applied both before training and
    /// before every inference (squeeze, median, thermometer). Identity for
    /// the other defences. `images` is `M × H × W × C`.
    pub fn transform_inputs(&self, images: &Tensor) -> Result<Tensor> {
        match *self {
            DefenceSpec::FeatureSqueeze { bits } => Ok(feature_squeeze(images, bits)),
            DefenceSpec::SpatialSmooth { window } => spatial_smooth(images, window),
            DefenceSpec::Thermometer { levels } => {
                let encoded = thermometer_encode(images, levels);
                let mut shape = images.shape().to_vec();
                *shape.last_mut().unwrap() *= levels;
                encoded.reshape(shape)
            }
            DefenceSpec::LabelSmooth { .. } | DefenceSpec::GaussianAugment { .. } => Ok(images.clone()),
        }
    }

    /// Training-target transform (label smoothing only).
    pub fn transform_targets(&self, targets: &Tensor) -> Result<Tensor> {
        match *self {
            DefenceSpec::LabelSmooth { alpha } => label_smooth(targets, alpha),
            _ => Ok(targets.clone()),
        }
    }
}

/// Quantises every value to `round(p·(2^bits−1)) / (2^bits−1)`.
pub fn feature_squeeze(x: &Tensor, bits: u32) -> Tensor {
    let levels = f64::from((1u32 << bits) - 1);
    let data = x.data().iter().map(|&p| libm::round(p * levels) / levels).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Per-channel median filter with edge replication over `M × H × W × C`.
pub fn spatial_smooth(images: &Tensor, window: usize) -> Result<Tensor> {
    if window.is_multiple_of(2) {
        bail_arg!("median window must be odd, got {}", window);
    }
    let s = images.shape();
    if s.len() != 4 {
        bail_shape!("median filter expects M×H×W×C, got {:?}", s);
    }
    let (h, w, c) = (s[1], s[2], s[3]);
    let mut out = vec![0.0; images.len()];
    for (img, dst) in images.iter_rows().zip(out.chunks_exact_mut(h * w * c)) {
        median_filter(img, h, w, c, window, dst);
    }
    Ok(Tensor::from_parts(s.to_vec(), out))
}

/// Median filter of one HWC image into `out`.
pub fn median_filter(img: &[f64], h: usize, w: usize, c: usize, window: usize, out: &mut [f64]) {
    let r = (window / 2) as isize;
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.clear();
                for dy in -r..=r {
                    let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -r..=r {
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        buf.push(img[(yy * w + xx) * c + ch]);
                    }
                }
                let mid = buf.len() / 2;
                let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
                out[(y * w + x) * c + ch] = *m;
            }
        }
    }
}

/// `t·(1−α) + (1−t)·α/(K−1)`: a one-hot row becomes `1−α` on the true
/// class and `α/(K−1)` elsewhere. Requires `α < (K−1)/K` so the argmax
/// survives.
pub fn label_smooth(targets: &Tensor, alpha: f64) -> Result<Tensor> {
    let k = targets.row_len();
    if k < 2 {
        bail_arg!("label smoothing needs at least two classes");
    }
    let limit = (k as f64 - 1.0) / k as f64;
    if !(0.0..limit).contains(&alpha) {
        bail_arg!("alpha {} outside [0, {}) for {} classes", alpha, limit, k);
    }
    let off = alpha / (k as f64 - 1.0);
    let data = targets.data().iter().map(|&t| t * (1.0 - alpha) + (1.0 - t) * off).collect();
    Ok(Tensor::from_parts(targets.shape().to_vec(), data))
}

/// Raw `N(0, σ²)` draws from the stream keyed by `seed`.
pub fn gaussian_noise(len: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal =
        Normal::new(0.0, sigma).map_err(|_| crate::Error::InvalidArgument(alloc::format!("bad sigma {sigma}")))?;
    let mut r = rng::seeded(seed);
    Ok((0..len).map(|_| normal.sample(&mut r)).collect())
}

/// Adds the noise of [`gaussian_noise`] and clips to `[0, 1]`.
pub fn gaussian_augment(x: &Tensor, sigma: f64, seed: u64) -> Result<Tensor> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let noise = gaussian_noise(x.len(), sigma, seed)?;
    let data = x.data().iter().zip(noise).map(|(&p, n)| (p + n).clamp(0.0, 1.0)).collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// In-place variant used during training, drawing from a caller-owned
/// generator.
pub(crate) fn gaussian_augment_slice(x: &mut [f64], normal: &Normal<f64>, r: &mut rng::Rng) {
    for p in x.iter_mut() {
        *p = (*p + normal.sample(r)).clamp(0.0, 1.0);
    }
}

/// Cumulative encoding: level `c` (0-based) of pixel `p` is 1 when
/// `p ≥ (c+1)/L`. Output shape is the input shape with `L` appended.
pub fn thermometer_encode(x: &Tensor, levels: usize) -> Tensor {
    let mut data = Vec::with_capacity(x.len() * levels);
    let l = levels as f64;
    for &p in x.data() {
        for c in 0..levels {
            data.push(if p >= (c + 1) as f64 / l { 1.0 } else { 0.0 });
        }
    }
    let mut shape = x.shape().to_vec();
    shape.push(levels);
    Tensor::from_parts(shape, data)
}
