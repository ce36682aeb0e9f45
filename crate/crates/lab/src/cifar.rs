//! CIFAR-10 binary batches: each record is one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes of a 32×32 image.

use std::fs;
use std::path::Path;

use rawzero_core::data::{Dataset, Split};
use rawzero_core::tensor::Tensor;

use crate::error::{LabError, Result};

pub const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const RECORD: usize = 1 + 3 * PLANE;

pub const TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const TEST_FILE: &str = "test_batch.bin";

/// Appends the records of one batch file, converting planar RGB to HWC.
fn read_batch(path: &Path, labels: &mut Vec<usize>, pixels: &mut Vec<f64>) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(LabError::format(
            path,
            format!("{} bytes is not a whole number of {RECORD}-byte records", bytes.len()),
        ));
    }
    for rec in bytes.chunks_exact(RECORD) {
        labels.push(rec[0] as usize);
        let planes = &rec[1..];
        for i in 0..PLANE {
            for c in 0..3 {
                pixels.push(f64::from(planes[c * PLANE + i]) / 255.0);
            }
        }
    }
    Ok(())
}

pub fn load_batches(paths: &[&Path], class_names: Option<Vec<String>>, split: Split) -> Result<Dataset> {
    let (mut labels, mut pixels) = (Vec::new(), Vec::new());
    for p in paths {
        read_batch(p, &mut labels, &mut pixels)?;
    }
    let names = match class_names {
        Some(n) => n,
        None => Dataset::default_class_names(10),
    };
    let images = Tensor::new(vec![labels.len(), SIDE, SIDE, 3], pixels)?;
    let first = paths.first().copied().unwrap_or(Path::new(""));
    Dataset::new(images, labels, names, split).map_err(|e| LabError::format(first, e.to_string()))
}

/// Class names from `batches.meta.txt` (one per line) when present.
pub fn class_names(dir: &Path) -> Result<Option<Vec<String>>> {
    let meta = dir.join("batches.meta.txt");
    if !meta.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&meta).map_err(|e| LabError::io(&meta, e))?;
    Ok(Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()))
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let names = class_names(dir)?;
    let train: Vec<_> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    let train_refs: Vec<&Path> = train.iter().map(|p| p.as_path()).collect();
    let test = dir.join(TEST_FILE);
    Ok((load_batches(&train_refs, names.clone(), Split::Train)?, load_batches(&[&test], names, Split::Test)?))
}
