//! CIFAR-10 binary batches: each record is one label byte followed by a
//! 32×32 image stored channel-planar (1024 R, 1024 G, 1024 B), rows
//! top to bottom within each plane.

use std::path::Path;

use super::{ImageDataset, ImageShape};
use crate::error::{Error, Result};

pub const CIFAR10_SIDE: usize = 32;
pub const CIFAR10_CLASSES: usize = 10;
const PLANE: usize = CIFAR10_SIDE * CIFAR10_SIDE;
pub const CIFAR10_RECORD_BYTES: usize = 1 + 3 * PLANE;

/// Parses the concatenated records of one or more batch files.
pub fn parse_cifar10_records(bytes: &[u8]) -> Result<(Vec<u8>, Vec<usize>)> {
    if bytes.len() % CIFAR10_RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a multiple of the {CIFAR10_RECORD_BYTES}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR10_RECORD_BYTES;
    let mut pixels = Vec::with_capacity(n * 3 * PLANE);
    let mut labels = Vec::with_capacity(n);
    for (r, rec) in bytes.chunks_exact(CIFAR10_RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES {
            return Err(Error::Format(format!("record {r} has label byte {label}")));
        }
        labels.push(label);
        let planes = &rec[1..];
        for p in 0..PLANE {
            for ch in 0..3 {
                pixels.push(planes[ch * PLANE + p]);
            }
        }
    }
    Ok((pixels, labels))
}

pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<ImageDataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (px, lb) = parse_cifar10_records(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        pixels.extend(px);
        labels.extend(lb);
    }
    ImageDataset::new(ImageShape::new(CIFAR10_SIDE, CIFAR10_SIDE, 3), pixels, labels, CIFAR10_CLASSES)
}
