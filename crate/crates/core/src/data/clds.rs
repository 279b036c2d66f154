//! Single-file dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! offset size field
//!      0    4 magic "CLDS"
//!      4    2 version (u16)
//!      6    4 N (u32)
//!     10    2 H (u16)
//!     12    2 W (u16)
//!     14    1 C (u8)
//!     15    1 num_classes (u8)
//!     16    … N records: clean label u8, noisy label u8, H·W·C pixel bytes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ImageDataset, ImageShape};
use crate::error::{Error, Result};

pub const CLDS_MAGIC: &[u8; 4] = b"CLDS";
pub const CLDS_VERSION: u16 = 1;
const HEADER_BYTES: usize = 16;

pub fn write_clds<W: Write>(ds: &ImageDataset, mut out: W) -> Result<()> {
    let shape = ds.shape();
    let fits = u32::try_from(ds.len()).is_ok()
        && u16::try_from(shape.height).is_ok()
        && u16::try_from(shape.width).is_ok()
        && u8::try_from(shape.channels).is_ok()
        && u8::try_from(ds.num_classes()).is_ok();
    if !fits {
        return Err(Error::Format("dataset dimensions exceed the CLDS header fields".into()));
    }
    let mut buf = Vec::with_capacity(HEADER_BYTES + ds.len() * (2 + shape.len()));
    buf.extend_from_slice(CLDS_MAGIC);
    buf.extend_from_slice(&CLDS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(shape.height as u16).to_le_bytes());
    buf.extend_from_slice(&(shape.width as u16).to_le_bytes());
    buf.push(shape.channels as u8);
    buf.push(ds.num_classes() as u8);
    for i in 0..ds.len() {
        buf.push(ds.clean_labels()[i] as u8);
        buf.push(ds.noisy_labels()[i] as u8);
        buf.extend_from_slice(ds.image_bytes(i));
    }
    out.write_all(&buf).map_err(|e| Error::io("<clds stream>", e))
}

pub fn read_clds<R: Read>(mut input: R) -> Result<ImageDataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<clds stream>", e))?;
    if bytes.len() < HEADER_BYTES || &bytes[..4] != CLDS_MAGIC {
        return Err(Error::Format("missing CLDS header".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let version = u16_at(4);
    if version != CLDS_VERSION {
        return Err(Error::Format(format!("unsupported CLDS version {version}")));
    }
    let n = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let shape = ImageShape::new(u16_at(10) as usize, u16_at(12) as usize, bytes[14] as usize);
    let num_classes = bytes[15] as usize;
    let rec = 2 + shape.len();
    if bytes.len() != HEADER_BYTES + n * rec {
        return Err(Error::Format(format!(
            "{} bytes for {n} records of {rec} bytes",
            bytes.len() - HEADER_BYTES
        )));
    }
    let mut clean = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * shape.len());
    for r in bytes[HEADER_BYTES..].chunks_exact(rec) {
        clean.push(r[0] as usize);
        noisy.push(r[1] as usize);
        pixels.extend_from_slice(&r[2..]);
    }
    ImageDataset::with_noisy_labels(shape, pixels, clean, noisy, num_classes)
        .map_err(|e| Error::Format(format!("invalid CLDS payload: {e}")))
}

impl ImageDataset {
    pub fn save_clds(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_clds(self, std::io::BufWriter::new(f))
    }

    pub fn load_clds(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_clds(std::io::BufReader::new(f))
    }
}
