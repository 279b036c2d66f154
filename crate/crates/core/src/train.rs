//! The training loop: Adam, linear learning-rate decay and the method
//! variants used as baselines and ablations.
//!
//! Every random draw comes from a stream keyed by `(seed, epoch, …)`, so a
//! run is a pure function of its config and datasets.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_view, Normalization, TransformParams};
use crate::autodiff::{Tape, Tensor};
use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::eval::{memorization_from_predictions, predict_labels, accuracy, MetricsRow};
use crate::losses::{total_loss, LossBreakdown, LossConfig, Reduction, SupervisedTerm};
use crate::model::{init_params, BatchViews, ModelParams, NetworkConfig};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Colearning,
    StandardCe,
    CeMixup,
    ColearningNoStr,
    ColearningNoMixup,
    WeightedSup,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Colearning,
        Method::StandardCe,
        Method::CeMixup,
        Method::ColearningNoStr,
        Method::ColearningNoMixup,
        Method::WeightedSup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Colearning => "colearning",
            Method::StandardCe => "standard_ce",
            Method::CeMixup => "ce_mixup",
            Method::ColearningNoStr => "colearning_no_str",
            Method::ColearningNoMixup => "colearning_no_mixup",
            Method::WeightedSup => "weighted_sup",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method `{s}`")))
    }
}

/// One training arm. Field names double as config keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    /// Label for output files; empty means the method name.
    pub name: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub decay_start_fraction: f64,
    /// Supervised-term weight for `weighted_sup`.
    pub sup_weight: f64,
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub reduction: Reduction,
    pub include_positive_in_denominator: bool,
    pub per_sample_lambda: bool,
    /// Set per cell from the experiment's seed list.
    #[serde(skip)]
    pub seed: u64,
    pub encoder_widths: Vec<usize>,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    /// Standardize channels with the training split's statistics.
    pub standardize: bool,
    pub weak_transform: TransformParams,
    pub strong_transform: TransformParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Colearning,
            name: String::new(),
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            decay_start_fraction: 0.4,
            sup_weight: 0.01,
            tau: 0.5,
            alpha: 1.0,
            sigma: 0.5,
            reduction: Reduction::Mean,
            include_positive_in_denominator: false,
            per_sample_lambda: false,
            seed: 0,
            encoder_widths: vec![256, 128],
            projection_hidden: 128,
            projection_dim: 64,
            standardize: true,
            weak_transform: TransformParams::weak(),
            strong_transform: TransformParams::strong(),
        }
    }
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        TrainConfig { method, ..TrainConfig::default() }
    }

    pub fn label(&self) -> &str {
        if self.name.is_empty() {
            self.method.as_str()
        } else {
            &self.name
        }
    }

    /// Checks ranges; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(field, msg));
        if self.epochs < 1 {
            return bad("epochs", "must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size", "must be >= 2".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be > 0, got {}", self.lr));
        }
        for (field, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(field, format!("must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", format!("must be > 0, got {}", self.adam_eps));
        }
        if !(self.decay_start_fraction > 0.0 && self.decay_start_fraction <= 1.0) {
            return bad("decay_start_fraction", format!("must lie in (0, 1], got {}", self.decay_start_fraction));
        }
        for (field, v) in [("tau", self.tau), ("alpha", self.alpha), ("sigma", self.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be > 0, got {v}"));
            }
        }
        if !(self.sup_weight >= 0.0 && self.sup_weight.is_finite()) {
            return bad("sup_weight", format!("must be >= 0, got {}", self.sup_weight));
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad("encoder_widths", "needs at least one layer, all widths >= 1".into());
        }
        if self.projection_hidden == 0 || self.projection_dim == 0 {
            return bad("projection_dim", "projection widths must be >= 1".into());
        }
        self.weak_transform.validate().map_err(|e| Error::config("weak_transform", e.to_string()))?;
        self.strong_transform.validate().map_err(|e| Error::config("strong_transform", e.to_string()))?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        let (supervised, intrinsic, structural) = match self.method {
            Method::Colearning => (SupervisedTerm::Mixup, true, true),
            Method::StandardCe => (SupervisedTerm::Plain, false, false),
            Method::CeMixup => (SupervisedTerm::Mixup, false, false),
            Method::ColearningNoStr => (SupervisedTerm::Mixup, true, false),
            Method::ColearningNoMixup => (SupervisedTerm::Plain, true, true),
            Method::WeightedSup => (SupervisedTerm::Weighted(self.sup_weight), true, true),
        };
        LossConfig {
            supervised,
            intrinsic,
            structural,
            tau: self.tau,
            alpha: self.alpha,
            sigma: self.sigma,
            reduction: self.reduction,
            include_positive_in_denominator: self.include_positive_in_denominator,
            per_sample_lambda: self.per_sample_lambda,
        }
    }

    pub fn network(&self, input_dim: usize, num_classes: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            encoder_widths: self.encoder_widths.clone(),
            projection_hidden: self.projection_hidden,
            projection_dim: self.projection_dim,
            num_classes,
        }
    }

    pub fn decay_start(&self) -> usize {
        (self.decay_start_fraction * self.epochs as f64).round() as usize
    }
}

/// Constant `lr` until `decay_start`, then linear towards 0 at `epochs`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let start = cfg.decay_start();
    if epoch < start || cfg.epochs <= start {
        cfg.lr
    } else {
        cfg.lr * cfg.epochs.saturating_sub(epoch) as f64 / (cfg.epochs - start) as f64
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ModelParams, grads: &[Vec<f64>], state: &mut AdamState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    let names = params.tensor_names();
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(Error::Dimension(format!("{} gradients for {} parameters", grads.len(), tensors.len())));
    }
    for (k, g) in grads.iter().enumerate() {
        if g.len() != tensors[k].numel() {
            return Err(Error::Dimension(format!("gradient of {} has {} entries", names[k], g.len())));
        }
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient in {}[{j}]", names[k])));
        }
    }
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (k, tensor) in tensors.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for ((p, &g), (mi, vi)) in tensor.data_mut().iter_mut().zip(&grads[k]).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.adam_eps);
        }
        if let Some(j) = tensor.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::Training(format!("parameter {}[{j}] became non-finite", names[k])));
        }
    }
    Ok(())
}

/// Augmented views and one-hot noisy labels for the samples in `batch`.
pub fn build_views(ds: &ImageDataset, batch: &[usize], norm: &Normalization, cfg: &TrainConfig, epoch: usize, strong: bool) -> Result<BatchViews> {
    let d = ds.shape().len();
    let c = ds.num_classes();
    let n = batch.len();
    let weak_params = TransformParams { is_strong: false, ..cfg.weak_transform.clone() };
    let strong_params = TransformParams { is_strong: true, ..cfg.strong_transform.clone() };
    let mut weak = Vec::with_capacity(n * d);
    let mut s2 = Vec::with_capacity(if strong { n * d } else { 0 });
    let mut s3 = Vec::with_capacity(if strong { n * d } else { 0 });
    let mut labels = vec![0.0; n * c];
    for (r, &i) in batch.iter().enumerate() {
        let img = ds.image(i);
        let view_rng = |view: u64| rng::stream(&[tag::AUGMENT, cfg.seed, epoch as u64, i as u64, view]);
        weak.extend(apply_view(&img, &weak_params, norm, &mut view_rng(1)));
        if strong {
            s2.extend(apply_view(&img, &strong_params, norm, &mut view_rng(2)));
            s3.extend(apply_view(&img, &strong_params, norm, &mut view_rng(3)));
        }
        labels[r * c + ds.noisy_labels()[i]] = 1.0;
    }
    let mk = |v: Vec<f64>| Tensor::from_vec(vec![if v.is_empty() { 0 } else { n }, d], v);
    Ok(BatchViews {
        weak: Tensor::from_vec(vec![n, d], weak)?,
        strong: [mk(s2)?, mk(s3)?],
        labels: Tensor::from_vec(vec![n, c], labels)?,
    })
}

/// Mean loss breakdown and number of optimizer steps in one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub losses: LossBreakdown,
    pub steps: usize,
}

/// One pass over the shuffled training set. A trailing batch smaller than
/// 2 is dropped.
pub fn train_epoch(
    ds: &ImageDataset,
    norm: &Normalization,
    params: &mut ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if ds.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }
    let loss_cfg = cfg.loss_config();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng::stream(&[tag::SHUFFLE, cfg.seed, epoch as u64]));
    let lr = lr_at(epoch, cfg);
    let mut records = Vec::new();
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        if batch.len() < 2 {
            continue;
        }
        let views = build_views(ds, batch, norm, cfg, epoch, loss_cfg.needs_projections())?;
        let mut mix_rng = rng::stream(&[tag::MIXUP, cfg.seed, epoch as u64, b as u64]);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let watchdog = |e: Error| match e {
            Error::NonFinite(msg) => Error::Training(format!("epoch {epoch}, batch {b}: {msg}")),
            other => other,
        };
        let loss = total_loss(&mut tape, &views, &bound, &loss_cfg, &mut mix_rng).map_err(watchdog)?;
        tape.backward(loss.total).map_err(watchdog)?;
        let grads: Vec<Vec<f64>> = bound
            .vars()
            .iter()
            .map(|&v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
            .collect();
        adam_step(params, &grads, state, lr, cfg).map_err(|e| match e {
            Error::Training(msg) => Error::Training(format!("epoch {epoch}, batch {b}: {msg}")),
            other => other,
        })?;
        records.push(loss.breakdown);
    }
    Ok(EpochStats { losses: LossBreakdown::mean_of(&records), steps: records.len() })
}

/// Final parameters and the per-epoch trace of a run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<MetricsRow>,
}

pub fn normalization_for(train: &ImageDataset, cfg: &TrainConfig) -> Normalization {
    if cfg.standardize {
        Normalization::from_dataset(train)
    } else {
        Normalization::identity(train.shape().channels)
    }
}

pub fn run_training(train: &ImageDataset, test: &ImageDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    run_training_with(train, test, cfg, |_| {})
}

/// [`run_training`] with a callback after every epoch.
pub fn run_training_with(
    train: &ImageDataset,
    test: &ImageDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.shape() != test.shape() || train.num_classes() != test.num_classes() {
        return Err(Error::Dimension("train and test splits differ in image shape or class count".into()));
    }
    if test.is_empty() {
        return Err(Error::Parameter("empty test set".into()));
    }
    let norm = normalization_for(train, cfg);
    let mut params = init_params(&cfg.network(train.shape().len(), train.num_classes()), cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = train_epoch(train, &norm, &mut params, &mut state, cfg, epoch)?;
        let test_accuracy = accuracy(&predict_labels(&params, test, &norm)?, test.clean_labels())?;
        let (clean_acc, memorization) = memorization_from_predictions(&predict_labels(&params, train, &norm)?, train)?;
        let row = MetricsRow {
            epoch,
            l_sup: stats.losses.l_sup,
            l_int: stats.losses.l_int,
            l_str: stats.losses.l_str,
            l_total: stats.losses.total,
            test_accuracy,
            clean_subset_train_acc: clean_acc,
            noisy_subset_memorization: memorization,
        };
        on_epoch(&row);
        trace.push(row);
    }
    Ok(TrainOutcome { params, trace })
}
