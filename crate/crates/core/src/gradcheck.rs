//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward passes, so it stays
//! independent of every backward rule it checks.

use rand::Rng as _;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossConfig};
use crate::model::{init_params, BatchViews, BoundLinear, BoundParams, ModelParams, NetworkConfig};
use crate::rng;

#[derive(Clone, Copy, Debug)]
pub struct GradTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for GradTolerance {
    fn default() -> Self {
        GradTolerance { rel: 1e-4, abs: 1e-7 }
    }
}

impl GradTolerance {
    pub fn accepts(&self, analytic: f64, numeric: f64) -> bool {
        let scale = analytic.abs().max(numeric.abs());
        (analytic - numeric).abs() <= (self.rel * scale).max(self.abs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.mismatches.is_empty()
    }

}

/// Compares the tape gradient of the scalar `f(inputs)` against central
/// differences with step `h` for every element of every input.
pub fn check_scalar_fn<F>(inputs: &[Tensor], h: f64, tol: GradTolerance, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_impl(inputs, h, tol, None, f)
}

/// Like [`check_scalar_fn`] but only at the listed `(input, index)` pairs.
pub fn check_scalar_fn_at<F>(inputs: &[Tensor], h: f64, tol: GradTolerance, coords: &[(usize, usize)], f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if let Some(&(i, j)) = coords.iter().find(|&&(i, j)| i >= inputs.len() || j >= inputs[i].numel()) {
        return Err(Error::Parameter(format!("coordinate ({i}, {j}) outside the inputs")));
    }
    check_impl(inputs, h, tol, Some(coords), f)
}

fn check_impl<F>(inputs: &[Tensor], h: f64, tol: GradTolerance, coords: Option<&[(usize, usize)]>, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item().ok_or_else(|| Error::Contract("gradcheck needs a scalar".into()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = inputs.iter().enumerate().flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j))).collect();
            &all
        }
    };
    let mut report = GradReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for &(which, idx) in coords {
        let orig = inputs[which].data()[idx];
        work[which].data_mut()[idx] = orig + h;
        let plus = eval(&work)?;
        work[which].data_mut()[idx] = orig - h;
        let minus = eval(&work)?;
        work[which].data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        record(&mut report, which, idx, analytic[which][idx], numeric, tol);
    }
    Ok(report)
}

/// Finite-difference step used by the full-loss check.
pub const FD_STEP: f64 = 1e-6;

/// Parameters and views for the full-loss gradient check: 4 samples of
/// 8×8×1 images, 3 classes, random views, biases moved off zero so no
/// ReLU sits at its kink.
pub fn loss_fixture(network: &NetworkConfig, seed: u64) -> Result<(ModelParams, BatchViews)> {
    if network.num_classes != 3 {
        return Err(Error::Parameter("the fixture has 3 classes".into()));
    }
    let mut params = init_params(network, seed)?;
    let mut r = rng::stream(&[seed, 0xF1]);
    for (k, t) in params.tensors_mut().into_iter().enumerate() {
        if k % 2 == 1 {
            t.data_mut().iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
        }
    }
    let d = network.input_dim;
    let mut view = || Tensor::from_vec(vec![4, d], (0..4 * d).map(|_| r.gen_range(-1.0..1.0)).collect());
    let weak = view()?;
    let strong = [view()?, view()?];
    let mut labels = vec![0.0; 12];
    for (i, c) in [0usize, 1, 2, 0].into_iter().enumerate() {
        labels[i * 3 + c] = 1.0;
    }
    Ok((params, BatchViews { weak, strong, labels: Tensor::from_vec(vec![4, 3], labels)? }))
}

/// Narrow network used where every coordinate is checked.
pub fn fixture_network() -> NetworkConfig {
    NetworkConfig { encoder_widths: vec![16, 12], projection_hidden: 10, projection_dim: 6, ..NetworkConfig::new(64, 3) }
}

/// Compares the backward gradient of the full loss with central finite
/// differences for every parameter (or the `coords` subset). MixUp draws
/// are replayed from the same seed at every evaluation.
pub fn check_total_loss(
    params: &ModelParams,
    views: &BatchViews,
    cfg: &LossConfig,
    tol: GradTolerance,
    coords: Option<&[(usize, usize)]>,
) -> Result<GradReport> {
    let inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let n_enc = params.encoder.len();
    let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let lin = |k: usize| BoundLinear { weight: vars[2 * k], bias: vars[2 * k + 1] };
        let bound = BoundParams {
            encoder: (0..n_enc).map(lin).collect(),
            classifier: lin(n_enc),
            projection: [lin(n_enc + 1), lin(n_enc + 2)],
        };
        let mut mix = rng::stream(&[rng::tag::MIXUP, 0]);
        Ok(total_loss(tape, views, &bound, cfg, &mut mix)?.total)
    };
    match coords {
        Some(c) => check_scalar_fn_at(&inputs, FD_STEP, tol, c, f),
        None => check_scalar_fn(&inputs, FD_STEP, tol, f),
    }
}

/// Up to `per_tensor` random coordinates from every parameter tensor.
pub fn spread_coords(params: &ModelParams, per_tensor: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng::stream(&[seed, 0xF2]);
    let mut coords = Vec::new();
    for (i, t) in params.tensors().into_iter().enumerate() {
        for _ in 0..per_tensor.min(t.numel()) {
            coords.push((i, r.gen_range(0..t.numel())));
        }
    }
    coords
}

pub(crate) fn record(report: &mut GradReport, input: usize, index: usize, analytic: f64, numeric: f64, tol: GradTolerance) {
    report.checked += 1;
    let err = (analytic - numeric).abs();
    report.max_abs_err = report.max_abs_err.max(err);
    let scale = analytic.abs().max(numeric.abs());
    if scale > 0.0 {
        report.max_rel_err = report.max_rel_err.max(err / scale);
    }
    if !tol.accepts(analytic, numeric) {
        report.mismatches.push(Mismatch { input, index, analytic, numeric });
    }
}
