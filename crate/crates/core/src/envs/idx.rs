//! IDX image/label file loading (the MNIST container format).
//!
//! Big-endian headers: magic 0x00000803 for image files (count, rows, cols)
//! and 0x00000801 for label files (count). Pixels are bytes scaled to [0, 1].

use crate::error::{Error, Result};
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Idx(format!("truncated file: no {what} at byte {offset}")));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image/label pair as (row-flattened features in [0,1], labels).
pub fn idx_load<P: AsRef<Path>>(images_path: P, labels_path: P) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let magic = read_be_u32(&images, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Idx(format!(
            "wrong magic in image file: {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n_images = read_be_u32(&images, 4, "image count")? as usize;
    let rows = read_be_u32(&images, 8, "row count")? as usize;
    let cols = read_be_u32(&images, 12, "column count")? as usize;
    let pixels = rows * cols;
    let expected = 16 + n_images * pixels;
    if images.len() != expected {
        return Err(Error::Idx(format!(
            "truncated image file: {} bytes, header implies {expected}",
            images.len()
        )));
    }

    let magic = read_be_u32(&labels, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx(format!(
            "wrong magic in label file: {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = read_be_u32(&labels, 4, "label count")? as usize;
    if labels.len() != 8 + n_labels {
        return Err(Error::Idx(format!(
            "truncated label file: {} bytes, header implies {}",
            labels.len(),
            8 + n_labels
        )));
    }
    if n_images != n_labels {
        return Err(Error::Idx(format!(
            "count mismatch: {n_images} images vs {n_labels} labels"
        )));
    }

    let features = (0..n_images)
        .map(|i| {
            images[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    let labels = labels[8..].iter().map(|&b| b as usize).collect();
    Ok((features, labels))
}

/// Serializes features back to IDX image bytes (values ×255, rounded).
pub fn idx_write_images(features: &[Vec<f64>], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let pixels = rows * cols;
    let mut out = Vec::with_capacity(16 + features.len() * pixels);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(features.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for f in features {
        if f.len() != pixels {
            return Err(Error::DimensionMismatch {
                expected: pixels,
                got: f.len(),
            });
        }
        out.extend(f.iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}

/// Serializes labels back to IDX label bytes.
pub fn idx_write_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l as u8));
    out
}
