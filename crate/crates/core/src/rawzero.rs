//! Soft-label sets of an excluded class and the two representation metrics
//! computed on them.
//!
//! * DBM: root-mean-square Euclidean distance of the soft labels to their
//!   centroid. Lower means a tighter cluster.
//! * AM: L1 distance between the column sums of the leave-one-out soft
//!   labels (`H`) and of the standard classifier's renormalised soft labels
//!   (`H'`), divided by `N−1`. The sums are not averaged, so AM scales with
//!   the number of samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{bail_arg, bail_shape, Error, Result};
use crate::tensor::Tensor;

/// Tolerance on soft-label row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A standard-classifier row whose excluded-class probability reaches this
/// mass is renormalised to the uniform vector instead.
pub const DEGENERATE_MASS: f64 = 1.0 - 1e-9;

fn check_stochastic(rows: &Tensor, what: &str) -> Result<()> {
    if rows.shape().len() != 2 {
        bail_shape!("{} must be n×k, got {:?}", what, rows.shape());
    }
    for (i, r) in rows.iter_rows().enumerate() {
        let s: f64 = r.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE || r.iter().any(|&v| v < 0.0) {
            bail_arg!("{} row {} is not a probability vector (sum {})", what, i, s);
        }
    }
    Ok(())
}

/// Soft labels `n × (N−1)` the leave-one-out classifier assigns to the
/// samples of the class it never saw.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabelSet {
    excluded_class: usize,
    soft_labels: Tensor,
    retained: Vec<usize>,
}

impl SoftLabelSet {
    /// `retained[j]` is the original class id of column `j`.
    pub fn new(excluded_class: usize, soft_labels: Tensor, retained: Vec<usize>) -> Result<Self> {
        check_stochastic(&soft_labels, "soft labels")?;
        if soft_labels.rows() < 2 {
            bail_arg!("a soft-label set needs at least 2 samples, got {}", soft_labels.rows());
        }
        if retained.len() != soft_labels.row_len() {
            bail_shape!("{} retained classes for {} columns", retained.len(), soft_labels.row_len());
        }
        let n = retained.len() + 1;
        let expected: Vec<usize> = (0..n).filter(|&c| c != excluded_class).collect();
        if retained != expected {
            bail_arg!(
                "retained classes {:?} do not match exclusion of class {} out of {}",
                retained,
                excluded_class,
                n
            );
        }
        Ok(Self { excluded_class, soft_labels, retained })
    }

    pub fn excluded_class(&self) -> usize {
        self.excluded_class
    }

    pub fn soft_labels(&self) -> &Tensor {
        &self.soft_labels
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn len(&self) -> usize {
        self.soft_labels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total number of classes `N`.
    pub fn num_classes(&self) -> usize {
        self.retained.len() + 1
    }
}

/// Approximate ground truth for the same samples: the standard `N`-class
/// classifier's soft labels with the excluded column removed and each row
/// renormalised.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthSet {
    excluded_class: usize,
    soft_labels: Tensor,
    degenerate_rows: usize,
}

impl GroundTruthSet {
    pub fn new(excluded_class: usize, soft_labels: Tensor, degenerate_rows: usize) -> Result<Self> {
        check_stochastic(&soft_labels, "ground-truth soft labels")?;
        Ok(Self { excluded_class, soft_labels, degenerate_rows })
    }

    /// Drops column `excluded_class` from `probs` (`n × N`) and renormalises.
    /// Rows with at least [`DEGENERATE_MASS`] on the excluded class become
    /// uniform and are counted in [`GroundTruthSet::degenerate_rows`].
    pub fn from_standard_probs(excluded_class: usize, probs: &Tensor) -> Result<Self> {
        check_stochastic(probs, "standard-classifier probabilities")?;
        let n_classes = probs.row_len();
        if excluded_class >= n_classes {
            bail_arg!("excluded class {} outside [0, {})", excluded_class, n_classes);
        }
        if n_classes < 2 {
            bail_arg!("need at least two classes");
        }
        let k = n_classes - 1;
        let mut out = Vec::with_capacity(probs.rows() * k);
        let mut degenerate = 0;
        for row in probs.iter_rows() {
            if row[excluded_class] >= DEGENERATE_MASS {
                degenerate += 1;
                out.extend(core::iter::repeat_n(1.0 / k as f64, k));
                continue;
            }
            let mass: f64 = row.iter().enumerate().filter(|(c, _)| *c != excluded_class).map(|(_, v)| v).sum();
            out.extend(row.iter().enumerate().filter(|(c, _)| *c != excluded_class).map(|(_, v)| v / mass));
        }
        Self::new(excluded_class, Tensor::new(vec![probs.rows(), k], out)?, degenerate)
    }

    pub fn excluded_class(&self) -> usize {
        self.excluded_class
    }

    pub fn soft_labels(&self) -> &Tensor {
        &self.soft_labels
    }

    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    pub fn len(&self) -> usize {
        self.soft_labels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Root-mean-square distance of the rows to their centroid.
pub fn dbm_rows(rows: &Tensor) -> f64 {
    let n = rows.rows() as f64;
    let k = rows.row_len();
    let mut centroid = vec![0.0; k];
    for r in rows.iter_rows() {
        for (g, v) in centroid.iter_mut().zip(r) {
            *g += v;
        }
    }
    for g in &mut centroid {
        *g /= n;
    }
    let sq: f64 = rows.iter_rows().map(|r| r.iter().zip(&centroid).map(|(v, g)| (v - g) * (v - g)).sum::<f64>()).sum();
    libm::sqrt(sq / n)
}

pub fn dbm(set: &SoftLabelSet) -> f64 {
    dbm_rows(set.soft_labels())
}

/// Column sums (the soft-label histogram `H`).
pub fn histogram(rows: &Tensor) -> Vec<f64> {
    let mut h = vec![0.0; rows.row_len()];
    for r in rows.iter_rows() {
        for (acc, v) in h.iter_mut().zip(r) {
            *acc += v;
        }
    }
    h
}

/// `‖H' − H‖₁ / (N−1)`.
pub fn am(set: &SoftLabelSet, truth: &GroundTruthSet, n_classes: usize) -> Result<f64> {
    if set.excluded_class() != truth.excluded_class() {
        return Err(Error::Pairing(format!(
            "soft labels exclude class {} but ground truth excludes {}",
            set.excluded_class(),
            truth.excluded_class()
        )));
    }
    if set.len() != truth.len() || set.soft_labels().row_len() != truth.soft_labels().row_len() {
        return Err(Error::Pairing(format!(
            "soft labels {:?} vs ground truth {:?}",
            set.soft_labels().shape(),
            truth.soft_labels().shape()
        )));
    }
    if n_classes != set.num_classes() {
        bail_arg!("N = {} but the soft labels imply {}", n_classes, set.num_classes());
    }
    Ok(am_rows(set.soft_labels(), truth.soft_labels()))
}

/// AM on raw row matrices of equal shape.
pub fn am_rows(soft: &Tensor, truth: &Tensor) -> f64 {
    let h = histogram(soft);
    let h_truth = histogram(truth);
    let l1: f64 = h.iter().zip(&h_truth).map(|(a, b)| (a - b).abs()).sum();
    l1 / soft.row_len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub dbm: f64,
    pub am: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_class: Vec<ClassMetrics>,
    pub mean_dbm: f64,
    pub std_dbm: f64,
    pub mean_am: f64,
    pub std_am: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

pub fn summarize(per_class: Vec<ClassMetrics>) -> Result<MetricSummary> {
    if per_class.is_empty() {
        bail_arg!("nothing to summarise");
    }
    let dbms: Vec<f64> = per_class.iter().map(|m| m.dbm).collect();
    let ams: Vec<f64> = per_class.iter().map(|m| m.am).collect();
    let (mean_dbm, std_dbm) = mean_std(&dbms);
    let (mean_am, std_am) = mean_std(&ams);
    Ok(MetricSummary { per_class, mean_dbm, std_dbm, mean_am, std_am })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], excluded: usize) -> SoftLabelSet {
        let t = Tensor::from_rows(rows).unwrap();
        let n = t.row_len() + 1;
        SoftLabelSet::new(excluded, t, (0..n).filter(|&c| c != excluded).collect()).unwrap()
    }

    #[test]
    fn dbm_of_identical_rows_is_zero() {
        let s = set(&[&[0.2, 0.8], &[0.2, 0.8], &[0.2, 0.8]], 0);
        assert!(dbm(&s) < 1e-15);
    }

    #[test]
    fn dbm_two_point_fixture() {
        let s = set(&[&[1.0, 0.0], &[0.0, 1.0]], 2);
        assert!((dbm(&s) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn am_hand_fixture() {
        let s = set(&[&[1.0, 0.0], &[1.0, 0.0]], 1);
        let t = GroundTruthSet::new(1, Tensor::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(), 0).unwrap();
        assert_eq!(am(&s, &t, 3).unwrap(), 2.0);
        let same = GroundTruthSet::new(1, s.soft_labels().clone(), 0).unwrap();
        assert_eq!(am(&s, &same, 3).unwrap(), 0.0);
    }

    #[test]
    fn am_rejects_mismatched_pairs() {
        let s = set(&[&[1.0, 0.0], &[1.0, 0.0]], 1);
        let other = GroundTruthSet::new(0, s.soft_labels().clone(), 0).unwrap();
        assert!(matches!(am(&s, &other, 3), Err(Error::Pairing(_))));
        let short = GroundTruthSet::new(1, Tensor::from_rows(&[[0.5, 0.5]]).unwrap(), 0).unwrap();
        assert!(matches!(am(&s, &short, 3), Err(Error::Pairing(_))));
    }

    #[test]
    fn soft_label_set_validation() {
        let bad_sum = Tensor::from_rows(&[[0.5, 0.4], [0.5, 0.5]]).unwrap();
        assert!(SoftLabelSet::new(0, bad_sum, vec![1, 2]).is_err());
        let one_row = Tensor::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(SoftLabelSet::new(0, one_row, vec![1, 2]).is_err());
        let ok = Tensor::from_rows(&[[0.5, 0.5], [1.0, 0.0]]).unwrap();
        assert!(SoftLabelSet::new(1, ok.clone(), vec![1, 2]).is_err());
        assert!(SoftLabelSet::new(1, ok, vec![0, 2]).is_ok());
    }

    #[test]
    fn ground_truth_renormalises_and_guards() {
        let probs = Tensor::from_rows(&[[0.5, 0.25, 0.25], [1.0, 0.0, 0.0]]).unwrap();
        let g = GroundTruthSet::from_standard_probs(0, &probs).unwrap();
        assert_eq!(g.soft_labels().row(0), &[0.5, 0.5]);
        assert_eq!(g.soft_labels().row(1), &[0.5, 0.5]);
        assert_eq!(g.degenerate_rows(), 1);
        let g = GroundTruthSet::from_standard_probs(2, &probs).unwrap();
        assert!((g.soft_labels().row(0)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.soft_labels().row(1), &[1.0, 0.0]);
        assert_eq!(g.degenerate_rows(), 0);
    }

    #[test]
    fn summary_statistics() {
        let m = |class, v| ClassMetrics { class, dbm: v, am: v * 10.0 };
        let s = summarize(vec![m(0, 0.0), m(1, 1.0)]).unwrap();
        assert_eq!((s.mean_dbm, s.std_dbm), (0.5, 0.5));
        assert_eq!((s.mean_am, s.std_am), (5.0, 5.0));
        let s = summarize(vec![m(0, 0.3), m(1, 0.3), m(2, 0.3)]).unwrap();
        assert!((s.mean_dbm - 0.3).abs() < 1e-15 && s.std_dbm < 1e-15);
        assert!(summarize(Vec::new()).is_err());
    }

    fn stochastic(rows: usize, k: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut r = crate::rng::seeded(seed);
        let mut data = Vec::with_capacity(rows * k);
        for _ in 0..rows {
            let raw: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / s));
        }
        Tensor::new(vec![rows, k], data).unwrap()
    }

    // Mean squared distance to the centroid equals half the mean squared
    // pairwise distance, which needs no centroid at all.
    fn dbm_pairwise(t: &Tensor) -> f64 {
        let n = t.rows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += t.row(i).iter().zip(t.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        (acc / (2.0 * (n * n) as f64)).sqrt()
    }

    #[test]
    fn dbm_matches_pairwise_oracle() {
        let t = stochastic(100, 5, 42);
        assert!((dbm_rows(&t) - dbm_pairwise(&t)).abs() < 1e-12);
    }

    fn duplicated(t: &Tensor) -> Tensor {
        Tensor::concat_rows(&[t, t]).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn metric_properties(seed in 0u64..10_000, n in 2usize..40, k in 2usize..7, shift in 1usize..39) {
            let a = stochastic(n, k, seed);
            let b = stochastic(n, k, seed ^ 0xdead);
            let c = stochastic(n, k, seed ^ 0xbeef);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pa = a.select_rows(&perm).unwrap();
            let pb = b.select_rows(&perm).unwrap();
            proptest::prop_assert!((dbm_rows(&a) - dbm_rows(&pa)).abs() < 1e-12);
            proptest::prop_assert!((am_rows(&a, &b) - am_rows(&pa, &pb)).abs() < 1e-9);
            proptest::prop_assert!((am_rows(&a, &b) - am_rows(&b, &a)).abs() < 1e-12);
            proptest::prop_assert!(am_rows(&a, &c) <= am_rows(&a, &b) + am_rows(&b, &c) + 1e-9);
            proptest::prop_assert!(am_rows(&a, &b) <= 2.0 * n as f64 / k as f64 + 1e-9);
            let (da, db) = (duplicated(&a), duplicated(&b));
            proptest::prop_assert!((am_rows(&da, &db) - 2.0 * am_rows(&a, &b)).abs() < 1e-9);
            proptest::prop_assert!((dbm_rows(&da) - dbm_rows(&a)).abs() < 1e-12);
            proptest::prop_assert!(dbm_rows(&a) > 0.0);
        }
    }
}
