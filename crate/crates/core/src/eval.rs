//! Test accuracy, last-k summaries and memorization diagnostics.

use serde::{Deserialize, Serialize};

use crate::augment::Normalization;
use crate::autodiff::Tensor;
use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::model::{predict_logits, ModelParams};

/// Reported in place of a rate whose subset is empty.
pub const UNDEFINED_RATE: f64 = -1.0;

/// Rows evaluated per forward pass.
const EVAL_CHUNK: usize = 512;

/// One epoch of a training trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub l_sup: f64,
    pub l_int: f64,
    pub l_str: f64,
    pub l_total: f64,
    pub test_accuracy: f64,
    pub clean_subset_train_acc: f64,
    pub noisy_subset_memorization: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Un-augmented, normalized images `start..end` as a `rows × input_dim` matrix.
pub fn normalized_inputs(ds: &ImageDataset, start: usize, end: usize, norm: &Normalization) -> Result<Tensor> {
    let d = ds.shape().len();
    let mut data = vec![0.0; (end - start) * d];
    for (k, i) in (start..end).enumerate() {
        norm.apply_into(ds.image_bytes(i), &mut data[k * d..(k + 1) * d]);
    }
    Tensor::from_vec(vec![end - start, d], data)
}

/// Argmax class of every image in `ds`.
pub fn predict_labels(params: &ModelParams, ds: &ImageDataset, norm: &Normalization) -> Result<Vec<usize>> {
    if ds.shape().len() != params.config.input_dim {
        return Err(Error::Dimension(format!(
            "images of {} values for a model with input_dim {}",
            ds.shape().len(),
            params.config.input_dim
        )));
    }
    let mut out = Vec::with_capacity(ds.len());
    let mut start = 0;
    while start < ds.len() {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let logits = predict_logits(params, &normalized_inputs(ds, start, end, norm)?)?;
        out.extend((0..end - start).map(|r| argmax(logits.row(r))));
        start = end;
    }
    Ok(out)
}

/// Fraction of `predictions` equal to `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::Parameter("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy against the clean labels, without augmentation.
pub fn test_accuracy(params: &ModelParams, test: &ImageDataset, norm: &Normalization) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Parameter("empty test set".into()));
    }
    accuracy(&predict_labels(params, test, norm)?, test.clean_labels())
}

/// `(clean_subset_train_acc, noisy_subset_memorization)` from precomputed
/// predictions: accuracy against clean labels where the label was kept, and
/// the fraction of corrupted samples predicted as their corrupted label.
pub fn memorization_from_predictions(predictions: &[usize], ds: &ImageDataset) -> Result<(f64, f64)> {
    if predictions.len() != ds.len() {
        return Err(Error::Dimension(format!("{} predictions for {} samples", predictions.len(), ds.len())));
    }
    let (mut clean_n, mut clean_hit, mut noisy_n, mut noisy_hit) = (0usize, 0usize, 0usize, 0usize);
    for (i, &p) in predictions.iter().enumerate() {
        if ds.corruption_mask()[i] {
            noisy_n += 1;
            noisy_hit += usize::from(p == ds.noisy_labels()[i]);
        } else {
            clean_n += 1;
            clean_hit += usize::from(p == ds.clean_labels()[i]);
        }
    }
    let rate = |hit: usize, n: usize| if n == 0 { UNDEFINED_RATE } else { hit as f64 / n as f64 };
    Ok((rate(clean_hit, clean_n), rate(noisy_hit, noisy_n)))
}

pub fn memorization_metrics(params: &ModelParams, train: &ImageDataset, norm: &Normalization) -> Result<(f64, f64)> {
    memorization_from_predictions(&predict_labels(params, train, norm)?, train)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed mean test accuracy over the final `k` epochs, then mean and
/// sample standard deviation across seeds.
pub fn last_k_summary(traces: &[Vec<MetricsRow>], k: usize) -> Result<(f64, f64)> {
    last_k_summary_by(traces, k, |r| r.test_accuracy)
}

/// [`last_k_summary`] over an arbitrary column.
pub fn last_k_summary_by(traces: &[Vec<MetricsRow>], k: usize, metric: impl Fn(&MetricsRow) -> f64) -> Result<(f64, f64)> {
    if traces.is_empty() || k == 0 {
        return Err(Error::Parameter("last-k summary needs at least one trace and k >= 1".into()));
    }
    let mut per_seed = Vec::with_capacity(traces.len());
    for (s, trace) in traces.iter().enumerate() {
        if trace.len() < k {
            return Err(Error::Parameter(format!("trace {s} has {} epochs, fewer than k = {k}", trace.len())));
        }
        let tail = &trace[trace.len() - k..];
        per_seed.push(tail.iter().map(&metric).sum::<f64>() / k as f64);
    }
    Ok(mean_and_std(&per_seed))
}
