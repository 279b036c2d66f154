//! Image datasets with clean and noisy labels.

mod cifar;
mod clds;
mod noise;
mod synthetic;

pub use cifar::{load_cifar10_binary, parse_cifar10_records, CIFAR10_RECORD_BYTES};
pub use clds::{read_clds, write_clds, CLDS_MAGIC, CLDS_VERSION};
pub use noise::{
    build_asymmetric_circular, build_asymmetric_pairmap, build_symmetric, corrupt_labels, NoiseKind,
    TransitionMatrix, CIFAR10_PAIR_MAP,
};
pub use synthetic::{generate_synthetic, MAX_SYNTHETIC_CLASSES, MIN_SYNTHETIC_SIDE};

use crate::error::{Error, Result};

/// Height, width and channel count shared by every image of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image, `height × width × channels`, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub shape: ImageShape,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(shape: ImageShape, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} pixels for image shape {:?}",
                pixels.len(),
                shape
            )));
        }
        Ok(Image { shape, pixels })
    }

    pub fn filled(shape: ImageShape, value: u8) -> Self {
        Image { shape, pixels: vec![value; shape.len()] }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.pixels[(row * self.shape.width + col) * self.shape.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: u8) {
        let i = (row * self.shape.width + col) * self.shape.channels + ch;
        self.pixels[i] = v;
    }
}

/// Images with their clean labels, the labels training sees, and which of
/// those differ.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    shape: ImageShape,
    pixels: Vec<u8>,
    clean_labels: Vec<usize>,
    noisy_labels: Vec<usize>,
    corruption_mask: Vec<bool>,
    num_classes: usize,
}

impl ImageDataset {
    /// A dataset whose noisy labels equal its clean labels.
    pub fn new(shape: ImageShape, pixels: Vec<u8>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let noisy = labels.clone();
        Self::with_noisy_labels(shape, pixels, labels, noisy, num_classes)
    }

    pub fn with_noisy_labels(
        shape: ImageShape,
        pixels: Vec<u8>,
        clean_labels: Vec<usize>,
        noisy_labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = clean_labels.len();
        if noisy_labels.len() != n {
            return Err(Error::Dimension(format!("{} clean vs {} noisy labels", n, noisy_labels.len())));
        }
        if pixels.len() != n * shape.len() {
            return Err(Error::Dimension(format!(
                "{} pixel bytes for {} images of shape {:?}",
                pixels.len(),
                n,
                shape
            )));
        }
        if let Some(bad) = clean_labels.iter().chain(&noisy_labels).find(|&&l| l >= num_classes) {
            return Err(Error::Parameter(format!("label {bad} outside {num_classes} classes")));
        }
        let corruption_mask = clean_labels.iter().zip(&noisy_labels).map(|(c, y)| c != y).collect();
        Ok(ImageDataset { shape, pixels, clean_labels, noisy_labels, corruption_mask, num_classes })
    }

    pub fn len(&self) -> usize {
        self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Raw pixel bytes of image `i`.
    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn image(&self, i: usize) -> Image {
        Image { shape: self.shape, pixels: self.image_bytes(i).to_vec() }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn corruption_mask(&self) -> &[bool] {
        &self.corruption_mask
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.corruption_mask.iter().filter(|&&m| m).count() as f64 / self.len() as f64
    }

    /// Same images and clean labels with a new set of noisy labels.
    pub fn relabeled(&self, noisy_labels: Vec<usize>) -> Result<Self> {
        Self::with_noisy_labels(self.shape, self.pixels.clone(), self.clean_labels.clone(), noisy_labels, self.num_classes)
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Parameter(format!("index {bad} outside a dataset of {}", self.len())));
        }
        let mut pixels = Vec::with_capacity(indices.len() * self.shape.len());
        indices.iter().for_each(|&i| pixels.extend_from_slice(self.image_bytes(i)));
        let pick = |v: &[usize]| indices.iter().map(|&i| v[i]).collect();
        Self::with_noisy_labels(self.shape, pixels, pick(&self.clean_labels), pick(&self.noisy_labels), self.num_classes)
    }

    /// Per-channel mean and standard deviation over all pixels, scaled to
    /// `[0, 1]` intensities.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.shape.channels;
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for (i, &p) in self.pixels.iter().enumerate() {
            let v = p as f64 / 255.0;
            sum[i % c] += v;
            sq[i % c] += v * v;
        }
        let count = (self.pixels.len() / c.max(1)).max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq.iter().zip(&mean).map(|(s, m)| (s / count - m * m).max(0.0).sqrt()).collect();
        (mean, std)
    }

    /// 64-bit FNV-1a digest of the noisy labels, for checking that two runs
    /// trained on the same corruption.
    pub fn noisy_label_digest(&self) -> u64 {
        self.noisy_labels.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &l| {
            (h ^ l as u64).wrapping_mul(0x0000_0100_0000_01B3)
        })
    }
}
