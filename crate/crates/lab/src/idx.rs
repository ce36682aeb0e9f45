//! IDX files as distributed with MNIST and Fashion-MNIST.
//!
//! Header: two zero bytes, a type code (0x08 = unsigned byte), the number of
//! dimensions, then one big-endian `u32` extent per dimension. The payload
//! follows in row-major order.

use std::fs;
use std::path::Path;

use rawzero_core::data::{Dataset, Split};
use rawzero_core::tensor::Tensor;

use crate::error::{LabError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw unsigned-byte IDX contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(LabError::format(path, "truncated IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        return Err(LabError::format(path, format!("bad IDX magic 0x{magic:08x}")));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if ndims == 0 || bytes.len() < header {
        return Err(LabError::format(path, "truncated IDX header"));
    }
    let dims: Vec<usize> =
        bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(LabError::format(
            path,
            format!("IDX payload has {} bytes, dimensions {:?} need {}", payload.len(), dims, expected),
        ));
    }
    Ok(IdxArray { dims, data: payload.to_vec() })
}

pub fn encode(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn read(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    parse(&bytes, path)
}

pub fn write(path: &Path, array: &IdxArray) -> Result<()> {
    fs::write(path, encode(array)).map_err(|e| LabError::io(path, e))
}

fn expect_magic(array: &IdxArray, magic: u32, path: &Path) -> Result<()> {
    let found = 0x0800 | array.dims.len() as u32;
    if found != magic {
        return Err(LabError::format(path, format!("bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    Ok(())
}

/// Loads an image/label file pair. Pixels are divided by 255; the class count
/// is `max(label) + 1` unless names are supplied.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    class_names: Option<Vec<String>>,
    split: Split,
) -> Result<Dataset> {
    let images = read(images_path)?;
    expect_magic(&images, IMAGES_MAGIC, images_path)?;
    let labels = read(labels_path)?;
    expect_magic(&labels, LABELS_MAGIC, labels_path)?;
    let m = images.dims[0];
    if labels.dims[0] != m {
        return Err(LabError::format(
            labels_path,
            format!("{} labels but {} has {} images", labels.dims[0], images_path.display(), m),
        ));
    }
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let names = match class_names {
        Some(n) => n,
        None => Dataset::default_class_names(labels.iter().max().map_or(1, |&l| l + 1)),
    };
    let (h, w) = (images.dims[1], images.dims[2]);
    let pixels = images.data.iter().map(|&p| f64::from(p) / 255.0).collect();
    let tensor = Tensor::new(vec![m, h, w, 1], pixels)?;
    Dataset::new(tensor, labels, names, split).map_err(|e| LabError::format(labels_path, e.to_string()))
}

/// Writes a dataset back as an IDX pair, rounding pixels to bytes.
pub fn save_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (h, w, c) = ds.image_dims();
    if c != 1 {
        return Err(LabError::format(images_path, format!("IDX images are single-channel, dataset has {c} channels")));
    }
    let data = ds.images().data().iter().map(|&p| (p * 255.0).round() as u8).collect();
    write(images_path, &IdxArray { dims: vec![ds.len(), h, w], data })?;
    let labels = ds.labels().iter().map(|&l| l as u8).collect();
    write(labels_path, &IdxArray { dims: vec![ds.len()], data: labels })
}
