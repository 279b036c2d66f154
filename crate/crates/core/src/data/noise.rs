//! Label-noise transition matrices and label corruption.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ImageDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Confusable-class flips for CIFAR-10 (airplane=0 … truck=9):
/// truck→automobile, bird→airplane, deer→horse, cat→dog.
pub const CIFAR10_PAIR_MAP: [(usize, usize); 4] = [(9, 1), (2, 0), (4, 7), (3, 5)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    AsymmetricPairmap,
    AsymmetricCircular,
}

/// Row-stochastic `C × C` matrix with `Q[i][j] = Pr[noisy = j | clean = i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    entries: Vec<f64>,
    num_classes: usize,
    noise_rate: f64,
    kind: NoiseKind,
}

impl TransitionMatrix {
    fn from_entries(entries: Vec<f64>, num_classes: usize, noise_rate: f64, kind: NoiseKind) -> Result<Self> {
        let q = TransitionMatrix { entries, num_classes, noise_rate, kind };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.num_classes {
            let row = self.row(i);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Parameter(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.num_classes + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Samples a noisy label for clean class `clean` from `u ∈ [0, 1)`.
    fn sample_row(&self, clean: usize, u: f64) -> usize {
        let row = self.row(clean);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding gap at the top; take the last nonzero.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(clean)
    }
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("noise rate {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_classes(num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {num_classes}")));
    }
    Ok(())
}

/// Uniform flips. With `include_true_class = false` the mass `p` is spread
/// over the other `C − 1` classes; otherwise over all `C`, the true class
/// included.
pub fn build_symmetric(num_classes: usize, p: f64, include_true_class: bool) -> Result<TransitionMatrix> {
    check_classes(num_classes)?;
    check_rate(p)?;
    let c = num_classes as f64;
    let (diag, off) = if include_true_class { (1.0 - p + p / c, p / c) } else { (1.0 - p, p / (c - 1.0)) };
    let mut entries = vec![off; num_classes * num_classes];
    for i in 0..num_classes {
        entries[i * num_classes + i] = diag;
    }
    // Fold rounding error into the diagonal so rows sum to one.
    for i in 0..num_classes {
        let off_sum: f64 = (0..num_classes).filter(|&j| j != i).map(|j| entries[i * num_classes + j]).sum();
        entries[i * num_classes + i] = (1.0 - off_sum).max(0.0);
    }
    TransitionMatrix::from_entries(entries, num_classes, p, NoiseKind::Symmetric)
}

pub fn build_asymmetric_pairmap(num_classes: usize, p: f64, pairs: &[(usize, usize)]) -> Result<TransitionMatrix> {
    check_classes(num_classes)?;
    check_rate(p)?;
    let mut entries = vec![0.0; num_classes * num_classes];
    for i in 0..num_classes {
        entries[i * num_classes + i] = 1.0;
    }
    let mut seen = vec![false; num_classes];
    for &(s, t) in pairs {
        if s >= num_classes || t >= num_classes {
            return Err(Error::Parameter(format!("pair ({s}, {t}) outside {num_classes} classes")));
        }
        if s == t {
            return Err(Error::Parameter(format!("pair ({s}, {t}) maps a class to itself")));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::Parameter(format!("duplicate source class {s}")));
        }
        entries[s * num_classes + s] = 1.0 - p;
        entries[s * num_classes + t] = p;
    }
    TransitionMatrix::from_entries(entries, num_classes, p, NoiseKind::AsymmetricPairmap)
}

/// Each class flips to `(i + 1) mod C` with probability `p`.
pub fn build_asymmetric_circular(num_classes: usize, p: f64) -> Result<TransitionMatrix> {
    check_classes(num_classes)?;
    check_rate(p)?;
    let mut entries = vec![0.0; num_classes * num_classes];
    for i in 0..num_classes {
        entries[i * num_classes + i] += 1.0 - p;
        entries[i * num_classes + (i + 1) % num_classes] += p;
    }
    TransitionMatrix::from_entries(entries, num_classes, p, NoiseKind::AsymmetricCircular)
}

/// Draws every noisy label independently from `Q[clean]`. The clean labels
/// are untouched and the result depends only on `seed`.
pub fn corrupt_labels(ds: &ImageDataset, q: &TransitionMatrix, seed: u64) -> Result<ImageDataset> {
    if q.num_classes() != ds.num_classes() {
        return Err(Error::Parameter(format!(
            "{}-class transition matrix for a {}-class dataset",
            q.num_classes(),
            ds.num_classes()
        )));
    }
    if ds.corruption_mask().iter().any(|&m| m) {
        return Err(Error::Parameter("dataset is already corrupted".into()));
    }
    let mut rng = rng::stream(&[tag::CORRUPT, seed]);
    let noisy = ds.clean_labels().iter().map(|&c| q.sample_row(c, rng.gen::<f64>())).collect();
    ds.relabeled(noisy)
}
