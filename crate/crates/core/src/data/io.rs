//! Dataset ingestion: headered CSV and MNIST-style IDX files.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn finish(features: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<LabeledDataset> {
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(features, dim, labels, class_count)
}

/// Parses CSV text with header `f0,...,f{d-1},label`.
pub fn read_csv_str(text: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let cols = header.len();
    if cols < 2 {
        return Err(Error::Parse { line: 1, message: "need at least one feature column and a label".into() });
    }
    for (i, name) in header.iter().enumerate() {
        let expected = if i + 1 == cols { "label".to_string() } else { format!("f{i}") };
        if name.trim() != expected {
            return Err(Error::Parse { line: 1, message: format!("column {i} is '{name}', expected '{expected}'") });
        }
    }
    let dim = cols - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for field in record.iter().take(dim) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("'{field}' is not a number") })?;
            features.push(v);
        }
        let raw = &record[dim];
        let label: usize = raw
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("label '{raw}' is not a non-negative integer") })?;
        labels.push(label);
    }
    finish(features, dim, labels)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_csv_str(&std::fs::read_to_string(path)?)
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::invalid("truncated IDX header"))
}

/// Decodes IDX image (`0x00000803`) and label (`0x00000801`) payloads.
/// Pixels are flattened row-major and scaled to `[0, 1]`.
pub fn read_idx_bytes(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let magic = be_u32(images, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::invalid(format!("image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let magic = be_u32(labels, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::invalid(format!("label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let n_labels = be_u32(labels, 4)? as usize;
    if n != n_labels {
        return Err(Error::DimensionMismatch { context: "IDX image vs label count", expected: n, got: n_labels });
    }
    let dim = rows * cols;
    let pixels = images
        .get(16..16 + n * dim)
        .ok_or_else(|| Error::invalid("IDX image payload shorter than header claims"))?;
    let raw_labels = labels
        .get(8..8 + n)
        .ok_or_else(|| Error::invalid("IDX label payload shorter than header claims"))?;
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    finish(features, dim, raw_labels.iter().map(|&l| usize::from(l)).collect())
}

pub fn read_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_idx_bytes(&std::fs::read(images)?, &std::fs::read(labels)?)
}
