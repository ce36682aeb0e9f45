//! Datasets stored as CSV rows `label,p0,…,p{HWC-1}` with byte pixels.

use std::path::Path;

use rawzero_core::data::{Dataset, Split};
use rawzero_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Image geometry of a CSV dataset. Pixels are listed HWC, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvLayout {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl CsvLayout {
    pub fn pixels(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Loads a CSV dataset. A first row whose label field is not an integer is
/// treated as a header and skipped.
pub fn load_csv(path: &Path, layout: CsvLayout, class_names: Option<Vec<String>>, split: Split) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| LabError::format(path, e.to_string()))?;
    let width = layout.pixels() + 1;
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LabError::format(path, e.to_string()))?;
        if i == 0 && rec.get(0).is_some_and(|f| f.trim().parse::<usize>().is_err()) {
            continue;
        }
        if rec.len() != width {
            return Err(LabError::format(path, format!("row {} has {} fields, expected {}", i + 1, rec.len(), width)));
        }
        let bad = |field: &str| LabError::format(path, format!("row {}: bad value {:?}", i + 1, field));
        labels.push(rec[0].trim().parse::<usize>().map_err(|_| bad(&rec[0]))?);
        for f in rec.iter().skip(1) {
            let b: u8 = f.trim().parse().map_err(|_| bad(f))?;
            pixels.push(f64::from(b) / 255.0);
        }
    }
    if labels.is_empty() {
        return Err(LabError::format(path, "no data rows"));
    }
    let names = class_names.unwrap_or_else(|| Dataset::default_class_names(labels.iter().max().map_or(1, |&l| l + 1)));
    let images = Tensor::new(vec![labels.len(), layout.height, layout.width, layout.channels], pixels)?;
    Dataset::new(images, labels, names, split).map_err(|e| LabError::format(path, e.to_string()))
}

/// Writes `ds` in the layout read by [`load_csv`], with a header row.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::format(path, e.to_string()))?;
    let pixels = ds.images().row_len();
    let mut header = vec!["label".to_string()];
    header.extend((0..pixels).map(|i| format!("p{i}")));
    let csv_err = |e: csv::Error| LabError::format(path, e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (row, &label) in ds.images().iter_rows().zip(ds.labels()) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|&p| ((p * 255.0).round() as u8).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}
