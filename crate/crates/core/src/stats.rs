//! Pearson correlation with a two-tailed t-test, and the report rows that
//! pair per-class representation metrics with per-class attack measures.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::CampaignSummary;
use crate::error::{bail_arg, Error, Result};
use crate::rawzero::MetricSummary;

const CF_MAX_TERMS: usize = 300;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Regularised incomplete beta function `I_x(a, b)`, by the continued
/// fraction evaluated with the modified Lentz method.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        bail_arg!("incomplete beta needs a, b > 0, got ({}, {})", a, b);
    }
    if !(0.0..=1.0).contains(&x) {
        bail_arg!("incomplete beta needs x in [0, 1], got {}", x);
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // The fraction converges fast for x < (a+1)/(a+b+2); use the symmetry
    // I_x(a,b) = 1 − I_{1−x}(b,a) otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_fraction(b, a, 1.0 - x)? / b)
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence(CF_MAX_TERMS))
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn t_two_tailed(t: f64, df: f64) -> Result<f64> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Sample correlation coefficient and its two-tailed p-value under
/// `t = r·√((n−2)/(1−r²))`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::Pairing(format!("{} x values for {} y values", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        bail_arg!("correlation needs at least 3 points, got {}", n);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("x has zero variance"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("y has zero variance"));
    }
    let r = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() == 1.0 { 0.0 } else { t_two_tailed(r * libm::sqrt(df / (1.0 - r * r)), df)?.clamp(0.0, 1.0) };
    Ok(Correlation { r, p, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Dbm,
    Am,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureId {
    MeanL2,
    ConfidenceScore,
    /// Diagnostic only.
    AdversarialAccuracy,
}

impl MetricId {
    pub fn id(self) -> &'static str {
        match self {
            MetricId::Dbm => "dbm",
            MetricId::Am => "am",
        }
    }
}

impl MeasureId {
    pub fn id(self) -> &'static str {
        match self {
            MeasureId::MeanL2 => "mean_l2",
            MeasureId::ConfidenceScore => "confidence_score",
            MeasureId::AdversarialAccuracy => "adversarial_accuracy",
        }
    }

    pub fn is_extra(self) -> bool {
        self == MeasureId::AdversarialAccuracy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub classifier: String,
    pub attack: String,
    pub metric: MetricId,
    pub measure: MeasureId,
    /// `None` when the correlation is undefined; see `undefined`.
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n_points: usize,
    pub extra: bool,
    pub undefined: Option<String>,
}

impl CorrelationReport {
    /// `"r (p)"` with two decimals, or `"undefined"`.
    pub fn cell(&self) -> String {
        match (self.r, self.p) {
            (Some(r), Some(p)) => format!("{r:.2} ({p:.2})"),
            _ => "undefined".to_string(),
        }
    }
}

/// One report per (attack, metric, measure) for a classifier. Every
/// campaign must cover exactly the classes of `metrics`, in order.
pub fn build_reports(
    classifier: &str,
    metrics: &MetricSummary,
    campaigns: &[(String, CampaignSummary)],
) -> Result<Vec<CorrelationReport>> {
    let n = metrics.per_class.len();
    if metrics.per_class.iter().enumerate().any(|(i, m)| m.class != i) {
        return Err(Error::Pairing("per-class metrics must be ordered by class id without gaps".into()));
    }
    let mut out = Vec::new();
    for (attack, c) in campaigns {
        let measures = [
            (MeasureId::MeanL2, &c.per_class_mean_l2),
            (MeasureId::ConfidenceScore, &c.per_class_confidence),
            (MeasureId::AdversarialAccuracy, &c.per_class_adversarial_accuracy),
        ];
        for (measure, ys) in measures {
            if ys.len() != n {
                return Err(Error::Pairing(format!(
                    "campaign {attack} covers {} classes, metrics cover {n}",
                    ys.len()
                )));
            }
            for metric in [MetricId::Dbm, MetricId::Am] {
                let xs: Vec<f64> =
                    metrics.per_class.iter().map(|m| if metric == MetricId::Dbm { m.dbm } else { m.am }).collect();
                let (r, p, undefined) = match pearson(&xs, ys) {
                    Ok(c) => (Some(c.r), Some(c.p), None),
                    Err(e @ Error::UndefinedCorrelation(_)) => (None, None, Some(e.to_string())),
                    Err(e) => return Err(e),
                };
                out.push(CorrelationReport {
                    classifier: classifier.to_string(),
                    attack: attack.clone(),
                    metric,
                    measure,
                    r,
                    p,
                    n_points: n,
                    extra: measure.is_extra(),
                    undefined,
                });
            }
        }
    }
    Ok(out)
}
