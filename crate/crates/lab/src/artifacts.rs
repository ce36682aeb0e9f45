//! CSV and JSON artifacts. Every CSV starts with a header line; floats are
//! written with Rust's shortest round-trip formatting so that summaries can
//! be recomputed exactly from the files.
//!
//! | file | header |
//! |------|--------|
//! | soft labels | `sample_id,excluded_class,source,p<c>…[,degenerate]` |
//! | metrics | `class,class_name,dbm,am,unknown_samples,degenerate_rows` |
//! | campaign | `sample_id,true_class,clean_pred,adv_pred,l2,confidence_delta` |
//! | correlation | `classifier,attack,metric,measure,n,r,p,cell,extra,undefined` |
//! | embedding | `sample_id,x,y,argmax_class` |
//! | histogram | `class,h_zero_shot,h_ground_truth` |
//!
//! In soft-label files `p<c>` holds the probability of original class `c`;
//! the column order is the retained-class order, so the header carries the
//! label map (column `k` ↔ relabelled class `k`).

use std::fs;
use std::path::Path;

use rawzero_core::attack::SampleResult;
use rawzero_core::rawzero::ClassMetrics;
use rawzero_core::stats::{CorrelationReport, MeasureId, MetricId};
use rawzero_core::tensor::Tensor;
use serde::Serialize;

use crate::error::{LabError, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| LabError::format(path, e.to_string()))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| LabError::format(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Header and records of a CSV file; rows are checked against the header
/// width.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
    path: std::path::PathBuf,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => LabError::io(path, std::io::Error::other(e.to_string())),
            _ => LabError::format(path, e.to_string()),
        })?;
        let header = r.headers().map_err(|e| LabError::format(path, e.to_string()))?.iter().map(String::from).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(|e| LabError::format(path, e.to_string()))?;
        Ok(Self { header, rows, path: path.to_path_buf() })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::format(&self.path, format!("missing column {name:?}")))
    }

    pub fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let field = self.rows[row].get(col).unwrap_or("");
        field.trim().parse().map_err(|_| {
            LabError::format(
                &self.path,
                format!("line {}: cannot parse {:?} in column {}", row + 2, field, self.header[col]),
            )
        })
    }

    pub fn error(&self, message: impl Into<String>) -> LabError {
        LabError::format(&self.path, message)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::format(path, e.to_string()))
}

/// One soft-label file: the zero-shot network's output on the unknown
/// class, or the renormalised standard-network output.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabelFile {
    pub excluded_class: usize,
    /// Original class id of each column.
    pub retained: Vec<usize>,
    pub sample_ids: Vec<usize>,
    pub sources: Vec<String>,
    /// `n × (N−1)`.
    pub probs: Tensor,
    /// Per-row guard flags (ground-truth files only).
    pub degenerate: Option<Vec<bool>>,
}

impl SoftLabelFile {
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate.as_ref().map_or(0, |d| d.iter().filter(|&&x| x).count())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut header: Vec<String> = ["sample_id", "excluded_class", "source"].map(String::from).to_vec();
        header.extend(self.retained.iter().map(|c| format!("p{c}")));
        if self.degenerate.is_some() {
            header.push("degenerate".into());
        }
        let rows = self.probs.iter_rows().enumerate().map(|(i, row)| {
            let mut rec =
                vec![self.sample_ids[i].to_string(), self.excluded_class.to_string(), self.sources[i].clone()];
            rec.extend(row.iter().map(|&v| fmt_f64(v)));
            if let Some(d) = &self.degenerate {
                rec.push(u8::from(d[i]).to_string());
            }
            rec
        });
        write_rows(path, &header, rows)
    }

    /// Reads a soft-label file. `source` and `degenerate` are optional so
    /// that externally produced files need only ids, the excluded class and
    /// the probability columns.
    pub fn read(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        let id_col = t.column("sample_id")?;
        let ex_col = t.column("excluded_class")?;
        let src_col = t.column("source").ok();
        let deg_col = t.column("degenerate").ok();
        let mut prob_cols = Vec::new();
        let mut retained = Vec::new();
        for (i, h) in t.header.iter().enumerate() {
            if let Some(c) = h.strip_prefix('p').and_then(|s| s.parse::<usize>().ok()) {
                prob_cols.push(i);
                retained.push(c);
            }
        }
        if prob_cols.len() < 2 {
            return Err(t.error("need at least two probability columns p<class>"));
        }
        if t.rows.is_empty() {
            return Err(t.error("no data rows"));
        }
        let mut excluded = None;
        let (mut ids, mut sources, mut probs, mut deg) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for r in 0..t.rows.len() {
            let ex: usize = t.parse(r, ex_col)?;
            if *excluded.get_or_insert(ex) != ex {
                return Err(t.error(format!(
                    "line {}: excluded class {} differs from {}",
                    r + 2,
                    ex,
                    excluded.unwrap()
                )));
            }
            ids.push(t.parse(r, id_col)?);
            sources.push(src_col.map_or(String::new(), |c| t.rows[r].get(c).unwrap_or("").to_string()));
            for &c in &prob_cols {
                probs.push(t.parse::<f64>(r, c)?);
            }
            if let Some(c) = deg_col {
                deg.push(t.parse::<u8>(r, c)? != 0);
            }
        }
        let excluded_class = excluded.unwrap();
        if retained.contains(&excluded_class) {
            return Err(t.error(format!("excluded class {excluded_class} also appears as a probability column")));
        }
        let probs = Tensor::new(vec![ids.len(), prob_cols.len()], probs)?;
        Ok(Self { excluded_class, retained, sample_ids: ids, sources, probs, degenerate: deg_col.map(|_| deg) })
    }
}

pub fn zero_shot_name(class: usize) -> String {
    format!("class_{class}_zero_shot.csv")
}

pub fn ground_truth_name(class: usize) -> String {
    format!("class_{class}_ground_truth.csv")
}

/// One row of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub class: usize,
    pub class_name: String,
    pub dbm: f64,
    pub am: f64,
    pub unknown_samples: usize,
    pub degenerate_rows: usize,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let header = ["class", "class_name", "dbm", "am", "unknown_samples", "degenerate_rows"].map(String::from);
    write_rows(
        path,
        &header,
        rows.iter().map(|m| {
            vec![
                m.class.to_string(),
                m.class_name.clone(),
                fmt_f64(m.dbm),
                fmt_f64(m.am),
                m.unknown_samples.to_string(),
                m.degenerate_rows.to_string(),
            ]
        }),
    )
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let t = Table::read(path)?;
    let cols = ["class", "class_name", "dbm", "am", "unknown_samples", "degenerate_rows"].map(|c| t.column(c));
    let [class, name, dbm, am, n, deg] = cols;
    let (class, name, dbm, am, n, deg) = (class?, name?, dbm?, am?, n?, deg?);
    (0..t.rows.len())
        .map(|r| {
            Ok(MetricRow {
                class: t.parse(r, class)?,
                class_name: t.rows[r].get(name).unwrap_or("").to_string(),
                dbm: t.parse(r, dbm)?,
                am: t.parse(r, am)?,
                unknown_samples: t.parse(r, n)?,
                degenerate_rows: t.parse(r, deg)?,
            })
        })
        .collect()
}

pub fn class_metrics(rows: &[MetricRow]) -> Vec<ClassMetrics> {
    rows.iter().map(|m| ClassMetrics { class: m.class, dbm: m.dbm, am: m.am }).collect()
}

const CAMPAIGN_HEADER: [&str; 6] = ["sample_id", "true_class", "clean_pred", "adv_pred", "l2", "confidence_delta"];

pub fn write_campaign(path: &Path, results: &[SampleResult]) -> Result<()> {
    write_rows(
        path,
        &CAMPAIGN_HEADER.map(String::from),
        results.iter().map(|r| {
            vec![
                r.sample_id.to_string(),
                r.true_class.to_string(),
                r.clean_pred.to_string(),
                r.adv_pred.to_string(),
                fmt_f64(r.l2),
                fmt_f64(r.confidence_delta),
            ]
        }),
    )
}

pub fn read_campaign(path: &Path) -> Result<Vec<SampleResult>> {
    let t = Table::read(path)?;
    let mut cols = [0; 6];
    for (c, name) in cols.iter_mut().zip(CAMPAIGN_HEADER) {
        *c = t.column(name)?;
    }
    (0..t.rows.len())
        .map(|r| {
            Ok(SampleResult {
                sample_id: t.parse(r, cols[0])?,
                true_class: t.parse(r, cols[1])?,
                clean_pred: t.parse(r, cols[2])?,
                adv_pred: t.parse(r, cols[3])?,
                l2: t.parse(r, cols[4])?,
                confidence_delta: t.parse(r, cols[5])?,
            })
        })
        .collect()
}

pub fn write_correlations(path: &Path, reports: &[CorrelationReport]) -> Result<()> {
    let header =
        ["classifier", "attack", "metric", "measure", "n", "r", "p", "cell", "extra", "undefined"].map(String::from);
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
    write_rows(
        path,
        &header,
        reports.iter().map(|r| {
            vec![
                r.classifier.clone(),
                r.attack.clone(),
                r.metric.id().to_string(),
                r.measure.id().to_string(),
                r.n_points.to_string(),
                opt(r.r),
                opt(r.p),
                r.cell(),
                r.extra.to_string(),
                r.undefined.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn parse_metric(s: &str) -> Option<MetricId> {
    [MetricId::Dbm, MetricId::Am].into_iter().find(|m| m.id() == s)
}

pub fn parse_measure(s: &str) -> Option<MeasureId> {
    [MeasureId::MeanL2, MeasureId::ConfidenceScore, MeasureId::AdversarialAccuracy].into_iter().find(|m| m.id() == s)
}

pub fn write_embedding(path: &Path, coords: &Tensor, sample_ids: &[usize], classes: &[usize]) -> Result<()> {
    let header = ["sample_id", "x", "y", "argmax_class"].map(String::from);
    write_rows(
        path,
        &header,
        coords
            .iter_rows()
            .enumerate()
            .map(|(i, xy)| vec![sample_ids[i].to_string(), fmt_f64(xy[0]), fmt_f64(xy[1]), classes[i].to_string()]),
    )
}

/// `(sample_id, x, y, argmax_class)` rows.
pub fn read_embedding(path: &Path) -> Result<Vec<(usize, f64, f64, usize)>> {
    let t = Table::read(path)?;
    let (i, x, y, c) = (t.column("sample_id")?, t.column("x")?, t.column("y")?, t.column("argmax_class")?);
    (0..t.rows.len()).map(|r| Ok((t.parse(r, i)?, t.parse(r, x)?, t.parse(r, y)?, t.parse(r, c)?))).collect()
}

pub fn write_histogram(path: &Path, classes: &[usize], h: &[f64], h_truth: &[f64]) -> Result<()> {
    let header = ["class", "h_zero_shot", "h_ground_truth"].map(String::from);
    write_rows(
        path,
        &header,
        classes.iter().enumerate().map(|(i, c)| vec![c.to_string(), fmt_f64(h[i]), fmt_f64(h_truth[i])]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rawzero-artifacts-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn soft_labels_round_trip_bit_exact() {
        let f = SoftLabelFile {
            excluded_class: 1,
            retained: vec![0, 2],
            sample_ids: vec![0, 1],
            sources: vec!["train:4".into(), "test,\"odd\"".into()],
            probs: Tensor::new(vec![2, 2], vec![0.1 + 0.2, 1.0 - (0.1 + 0.2), 1.0 / 3.0, 2.0 / 3.0]).unwrap(),
            degenerate: Some(vec![false, true]),
        };
        let p = tmp("soft.csv");
        f.write(&p).unwrap();
        assert_eq!(SoftLabelFile::read(&p).unwrap(), f);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,excluded_class,source,p0,p2,degenerate\n"));
        assert!(text.contains("\"test,\"\"odd\"\"\""));
    }

    #[test]
    fn minimal_injected_file() {
        let p = tmp("inject.csv");
        fs::write(&p, "sample_id,excluded_class,p1,p2\n0,0,0.5,0.5\n1,0,1,0\n").unwrap();
        let f = SoftLabelFile::read(&p).unwrap();
        assert_eq!(f.retained, vec![1, 2]);
        assert_eq!(f.degenerate, None);
        fs::write(&p, "sample_id,excluded_class,p1,p2\n0,0,0.5,0.5\n1,2,1,0\n").unwrap();
        assert!(SoftLabelFile::read(&p).unwrap_err().to_string().contains("differs"));
        fs::write(&p, "sample_id,excluded_class,p0,p2\n0,0,0.5,0.5\n").unwrap();
        assert!(SoftLabelFile::read(&p).is_err());
    }

    #[test]
    fn campaign_and_metrics_round_trip() {
        let rows = vec![
            SampleResult {
                sample_id: 3,
                true_class: 1,
                clean_pred: 1,
                adv_pred: 0,
                l2: 0.1 + 0.7,
                confidence_delta: -1e-17,
            },
            SampleResult { sample_id: 9, true_class: 0, clean_pred: 2, adv_pred: 2, l2: 0.0, confidence_delta: 0.25 },
        ];
        let p = tmp("campaign.csv");
        write_campaign(&p, &rows).unwrap();
        assert_eq!(read_campaign(&p).unwrap(), rows);

        let m = vec![MetricRow {
            class: 0,
            class_name: "T-shirt/top".into(),
            dbm: 0.3,
            am: 612.5,
            unknown_samples: 7000,
            degenerate_rows: 2,
        }];
        let p = tmp("metrics.csv");
        write_metrics(&p, &m).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), m);
    }
}
