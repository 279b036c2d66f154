//! The three Co-learning loss terms and their sum.
//!
//! Every term has two implementations: a tape version used for training and
//! a plain scalar version that follows the formulas term by term. Tests pin
//! the tape versions against the scalar ones.
//!
//! Batch reductions default to the mean so the unit-weighted sum of terms
//! does not depend on batch size.

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var, NORM_EPS};
use crate::error::{Error, Result};
use crate::model::{classify, encode, project, BatchViews, BoundParams};
use crate::rng::Rng;

/// Floor applied to probabilities and similarity values inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

/// How the supervised term is formed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupervisedTerm {
    /// Cross-entropy on MixUp-interpolated weak views.
    Mixup,
    /// Cross-entropy on the weak views.
    Plain,
    /// `weight ×` cross-entropy on the weak views, no MixUp.
    Weighted(f64),
}

/// Which terms enter the total, and their hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub supervised: SupervisedTerm,
    pub intrinsic: bool,
    pub structural: bool,
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub reduction: Reduction,
    pub include_positive_in_denominator: bool,
    pub per_sample_lambda: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            supervised: SupervisedTerm::Mixup,
            intrinsic: true,
            structural: true,
            tau: 0.5,
            alpha: 1.0,
            sigma: 0.5,
            reduction: Reduction::Mean,
            include_positive_in_denominator: false,
            per_sample_lambda: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Parameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if let SupervisedTerm::Weighted(w) = self.supervised {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("supervised weight must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Whether the strong views and projection head are needed at all.
    pub fn needs_projections(&self) -> bool {
        self.intrinsic || self.structural
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_sup: f64,
    pub l_int: f64,
    pub l_str: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_sup: f64, l_int: f64, l_str: f64) -> Self {
        LossBreakdown { l_sup, l_int, l_str, total: l_sup + l_int + l_str }
    }

    /// Component-wise mean; the total is re-derived from the means.
    pub fn mean_of(items: &[LossBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let s = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        LossBreakdown::new(s(|b| b.l_sup), s(|b| b.l_int), s(|b| b.l_str))
    }
}

fn reduce_rows(n: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n.max(1) as f64,
    }
}

// ---------------------------------------------------------------------------
// Scalar reference implementations
// ---------------------------------------------------------------------------

/// `−meanᵢ Σ_c ŷᵢc log max(ỹᵢc, 1e-12)`.
pub fn cross_entropy(targets: &Tensor, probs: &Tensor) -> Result<f64> {
    if targets.shape() != probs.shape() {
        return Err(Error::Dimension(format!("targets {:?} vs predictions {:?}", targets.shape(), probs.shape())));
    }
    let (n, _) = targets.dims2()?;
    let total: f64 = targets
        .data()
        .iter()
        .zip(probs.data())
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| -y * p.max(PROB_FLOOR).ln())
        .sum();
    Ok(total / n.max(1) as f64)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= NORM_EPS || nb <= NORM_EPS {
        return Err(Error::Degenerate("cosine similarity of a near-zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Which strong view a projection comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Second,
    Third,
}

/// Projections of both strong views for one batch.
#[derive(Clone, Copy, Debug)]
pub struct ViewPair<'a> {
    pub v2: &'a Tensor,
    pub v3: &'a Tensor,
}

impl ViewPair<'_> {
    fn get(&self, view: View, i: usize) -> &[f64] {
        match view {
            View::Second => self.v2.row(i),
            View::Third => self.v3.row(i),
        }
    }
}

/// `ℓ(v_a⁽ⁱ⁾, v_b⁽ⁱ⁾)`: the positive pair against the `4(N − 1)`
/// cross-sample pairs between the views of `i` and of every `j ≠ i`
/// (plus the positive itself when `include_positive` is set).
pub fn info_nce_pair(i: usize, a: View, b: View, v: ViewPair<'_>, tau: f64, include_positive: bool) -> Result<f64> {
    let (n, _) = v.v2.dims2()?;
    if n < 2 {
        return Err(Error::Parameter("InfoNCE needs a batch of at least 2".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("tau must be > 0, got {tau}")));
    }
    let pos = cosine_similarity(v.get(a, i), v.get(b, i))? / tau;
    let mut terms = Vec::with_capacity(4 * (n - 1) + 1);
    for j in (0..n).filter(|&j| j != i) {
        for ti in [View::Second, View::Third] {
            for tj in [View::Second, View::Third] {
                terms.push(cosine_similarity(v.get(ti, i), v.get(tj, j))? / tau);
            }
        }
    }
    if include_positive {
        terms.push(pos);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok(lse - pos)
}

/// Reference intrinsic loss: `reduceᵢ [ℓ(v₂⁽ⁱ⁾, v₃⁽ⁱ⁾) + ℓ(v₃⁽ⁱ⁾, v₂⁽ⁱ⁾)]`.
pub fn intrinsic_loss(v: ViewPair<'_>, tau: f64, include_positive: bool, reduction: Reduction) -> Result<f64> {
    let (n, _) = v.v2.dims2()?;
    if v.v3.shape() != v.v2.shape() {
        return Err(Error::Dimension("view projections differ in shape".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        total += info_nce_pair(i, View::Second, View::Third, v, tau, include_positive)?;
        total += info_nce_pair(i, View::Third, View::Second, v, tau, include_positive)?;
    }
    Ok(total * reduce_rows(n, reduction))
}

/// Gaussian kernel with zero mean and unit peak, `exp(−d² / 2σ²)`.
pub fn similarity_metric(d: f64, sigma: f64) -> Result<f64> {
    if d < 0.0 || !(sigma > 0.0) {
        return Err(Error::Parameter(format!("similarity_metric needs d >= 0 and sigma > 0 (d={d}, sigma={sigma})")));
    }
    Ok((-d * d / (2.0 * sigma * sigma)).exp())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Reference structural loss over ordered pairs `i ≠ j`:
/// `p_ij log(p_ij / max(q_ij, 1e-12))` with `p` from L2-normalized
/// projections and `q` from class-probability vectors.
pub fn structural_loss(projections: &Tensor, probs: &Tensor, sigma: f64, reduction: Reduction) -> Result<f64> {
    let (n, d) = projections.dims2()?;
    let (n2, _) = probs.dims2()?;
    if n != n2 {
        return Err(Error::Dimension(format!("{n} projections vs {n2} predictions")));
    }
    if n < 2 {
        return Err(Error::Parameter("structural loss needs a batch of at least 2".into()));
    }
    let mut unit = Vec::with_capacity(n * d);
    for i in 0..n {
        let r = projections.row(i);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= NORM_EPS {
            return Err(Error::Degenerate(format!("projection {i} is near zero")));
        }
        unit.extend(r.iter().map(|x| x / norm));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let p = similarity_metric(euclid(&unit[i * d..(i + 1) * d], &unit[j * d..(j + 1) * d]), sigma)?;
            let q = similarity_metric(euclid(probs.row(i), probs.row(j)), sigma)?;
            total += p * (p.ln() - q.max(PROB_FLOOR).ln());
        }
    }
    let pairs = (n * (n - 1)) as f64;
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / pairs,
    })
}

// ---------------------------------------------------------------------------
// MixUp
// ---------------------------------------------------------------------------

/// Interpolation coefficient(s) and partner permutation for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MixupDraw {
    /// One entry per batch, or one per sample when drawn per sample.
    pub lambdas: Vec<f64>,
    pub permutation: Vec<usize>,
}

impl MixupDraw {
    pub fn lambda(&self, i: usize) -> f64 {
        if self.lambdas.len() == 1 {
            self.lambdas[0]
        } else {
            self.lambdas[i]
        }
    }

    pub fn sample(batch: usize, alpha: f64, per_sample: bool, rng: &mut Rng) -> Result<Self> {
        if batch < 2 {
            return Err(Error::Parameter(format!("MixUp needs a batch of at least 2, got {batch}")));
        }
        let beta = Beta::new(alpha, alpha).map_err(|e| Error::Parameter(format!("Beta({alpha}, {alpha}): {e}")))?;
        let count = if per_sample { batch } else { 1 };
        let lambdas = (0..count).map(|_| beta.sample(rng).clamp(0.0, 1.0)).collect();
        let mut permutation: Vec<usize> = (0..batch).collect();
        permutation.shuffle(rng);
        Ok(MixupDraw { lambdas, permutation })
    }
}

/// `x̄⁽ⁱ⁾ = λx⁽ⁱ⁾ + (1−λ)x⁽ᵐ⁽ⁱ⁾⁾` applied row-wise to any matrix.
pub fn mix_rows(x: &Tensor, draw: &MixupDraw) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if draw.permutation.len() != n {
        return Err(Error::Dimension(format!("permutation of {} for a batch of {n}", draw.permutation.len())));
    }
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let l = draw.lambda(i);
        let partner = x.row(draw.permutation[i]);
        out.extend(x.row(i).iter().zip(partner).map(|(a, b)| l * a + (1.0 - l) * b));
    }
    Tensor::from_vec(vec![n, d], out)
}

/// Draws λ ~ Beta(α, α) and a random partner permutation, then mixes
/// inputs and one-hot labels with them.
pub fn mixup(
    x: &Tensor,
    labels: &Tensor,
    alpha: f64,
    per_sample: bool,
    rng: &mut Rng,
) -> Result<(Tensor, Tensor, MixupDraw)> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    let (n, _) = x.dims2()?;
    let draw = MixupDraw::sample(n, alpha, per_sample, rng)?;
    Ok((mix_rows(x, &draw)?, mix_rows(labels, &draw)?, draw))
}

// ---------------------------------------------------------------------------
// Tape versions
// ---------------------------------------------------------------------------

/// Cross-entropy from log-probabilities against (possibly soft) targets,
/// log-probabilities floored at `ln 1e-12`.
pub fn cross_entropy_tape(tape: &mut Tape, log_probs: Var, targets: &Tensor, reduction: Reduction) -> Result<Var> {
    if tape.shape(log_probs) != targets.shape() {
        return Err(Error::Dimension(format!(
            "targets {:?} vs log-probabilities {:?}",
            targets.shape(),
            tape.shape(log_probs)
        )));
    }
    let n = targets.shape()[0];
    let floored = tape.clamp_min(log_probs, PROB_FLOOR.ln())?;
    let t = tape.constant(targets.clone());
    let prod = tape.mul(floored, t)?;
    let s = tape.sum(prod, None)?;
    tape.scale(s, -reduce_rows(n, reduction))
}

/// Batched intrinsic loss on the tape.
pub fn intrinsic_loss_tape(
    tape: &mut Tape,
    v2: Var,
    v3: Var,
    tau: f64,
    include_positive: bool,
    reduction: Reduction,
) -> Result<Var> {
    let (n, _) = tape.value(v2).dims2()?;
    if tape.shape(v3) != tape.shape(v2) {
        return Err(Error::Dimension("view projections differ in shape".into()));
    }
    if n < 2 {
        return Err(Error::Parameter("InfoNCE needs a batch of at least 2".into()));
    }
    let m = 2 * n;
    let sample = |r: usize| r % n;
    let mut negatives = vec![0.0; m * m];
    let mut positives = vec![0.0; m * m];
    let mut selector = vec![0.0; n * m];
    for r in 0..m {
        for c in 0..m {
            if sample(r) != sample(c) {
                negatives[r * m + c] = 1.0;
            }
        }
        positives[r * m + (r + n) % m] = 1.0;
        selector[sample(r) * m + r] = 1.0;
    }
    let negatives = tape.constant(Tensor::from_vec(vec![m, m], negatives)?);
    let positives = tape.constant(Tensor::from_vec(vec![m, m], positives)?);
    let selector = tape.constant(Tensor::from_vec(vec![n, m], selector)?);
    let ones = tape.constant(Tensor::from_vec(vec![m, 1], vec![1.0; m])?);

    let all = tape.concat_rows(&[v2, v3])?;
    let unit = tape.l2_normalize(all)?;
    let unit_t = tape.transpose(unit)?;
    let sim = tape.matmul(unit, unit_t)?;
    let logits = tape.scale(sim, 1.0 / tau)?;
    let e = tape.exp(logits)?;

    // Denominator of sample i: both of its rows against every other sample.
    let neg = tape.mul(e, negatives)?;
    let row_sums = tape.matmul(neg, ones)?;
    let mut denom = tape.matmul(selector, row_sums)?;
    // Positive logit per row; summing sample i's two rows gives 2·D/τ.
    let pos_mask = tape.mul(logits, positives)?;
    let pos_rows = tape.matmul(pos_mask, ones)?;
    let pos_pair = tape.matmul(selector, pos_rows)?;
    if include_positive {
        let pe = tape.mul(e, positives)?;
        let pe_rows = tape.matmul(pe, ones)?;
        let pe_pair = tape.matmul(selector, pe_rows)?;
        let half = tape.scale(pe_pair, 0.5)?;
        denom = tape.add(denom, half)?;
    }
    let log_denom = tape.log(denom)?;
    let twice = tape.scale(log_denom, 2.0)?;
    let per_sample = tape.sub(twice, pos_pair)?;
    let s = tape.sum(per_sample, None)?;
    tape.scale(s, reduce_rows(n, reduction))
}

/// Batched structural loss on the tape; gradients reach both the
/// projections and the class probabilities.
pub fn structural_loss_tape(tape: &mut Tape, projections: Var, probs: Var, sigma: f64, reduction: Reduction) -> Result<Var> {
    let (n, _) = tape.value(projections).dims2()?;
    let (n2, _) = tape.value(probs).dims2()?;
    if n != n2 {
        return Err(Error::Dimension(format!("{n} projections vs {n2} predictions")));
    }
    if n < 2 {
        return Err(Error::Parameter("structural loss needs a batch of at least 2".into()));
    }
    let k = -1.0 / (2.0 * sigma * sigma);
    let unit = tape.l2_normalize(projections)?;
    let dv = tape.pairwise_sq_dist(unit)?;
    let log_p = tape.scale(dv, k)?;
    let p = tape.exp(log_p)?;
    let dy = tape.pairwise_sq_dist(probs)?;
    let log_q_raw = tape.scale(dy, k)?;
    let q = tape.exp(log_q_raw)?;
    let q = tape.clamp_min(q, PROB_FLOOR)?;
    let log_q = tape.log(q)?;
    let ratio = tape.sub(log_p, log_q)?;
    let terms = tape.mul(p, ratio)?;
    let mut off = vec![1.0; n * n];
    (0..n).for_each(|i| off[i * n + i] = 0.0);
    let off = tape.constant(Tensor::from_vec(vec![n, n], off)?);
    let masked = tape.mul(terms, off)?;
    let s = tape.sum(masked, None)?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / (n * (n - 1)) as f64,
    };
    tape.scale(s, scale)
}

/// Loss terms recorded on a tape, plus the scalar breakdown.
#[derive(Clone, Copy, Debug)]
pub struct TotalLoss {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

/// Builds the configured loss for one batch: supervised term on the weak
/// view, intrinsic term on the two strong-view projections, structural term
/// between the first strong-view projection and the predictions on the
/// un-mixed weak view. Disabled terms are reported as 0 and never enter the
/// graph.
pub fn total_loss(
    tape: &mut Tape,
    views: &BatchViews,
    params: &BoundParams,
    cfg: &LossConfig,
    rng: &mut Rng,
) -> Result<TotalLoss> {
    let n = views.weak.shape()[0];
    let red = cfg.reduction;
    let mut terms: Vec<Var> = Vec::new();

    // Predictions on the weak view are needed by the plain supervised term
    // and by the structural term.
    let needs_plain = !matches!(cfg.supervised, SupervisedTerm::Mixup) || cfg.structural;
    let plain = if needs_plain {
        let x1 = tape.constant(views.weak.clone());
        let u1 = encode(tape, x1, params)?;
        Some(classify(tape, u1, params)?)
    } else {
        None
    };

    let sup = match cfg.supervised {
        SupervisedTerm::Mixup => {
            let (x_bar, y_bar, _) = mixup(&views.weak, &views.labels, cfg.alpha, cfg.per_sample_lambda, rng)?;
            let xb = tape.constant(x_bar);
            let ub = encode(tape, xb, params)?;
            let cb = classify(tape, ub, params)?;
            cross_entropy_tape(tape, cb.log_probs, &y_bar, red)?
        }
        SupervisedTerm::Plain => cross_entropy_tape(tape, plain.expect("plain predictions").log_probs, &views.labels, red)?,
        SupervisedTerm::Weighted(w) => {
            let ce = cross_entropy_tape(tape, plain.expect("plain predictions").log_probs, &views.labels, red)?;
            tape.scale(ce, w)?
        }
    };
    terms.push(sup);
    let l_sup = tape.value(sup).item().expect("scalar");

    let (mut l_int, mut l_str) = (0.0, 0.0);
    if cfg.needs_projections() {
        let x2 = tape.constant(views.strong[0].clone());
        let u2 = encode(tape, x2, params)?;
        let v2 = project(tape, u2, params)?;
        if cfg.intrinsic {
            let x3 = tape.constant(views.strong[1].clone());
            let u3 = encode(tape, x3, params)?;
            let v3 = project(tape, u3, params)?;
            let li = intrinsic_loss_tape(tape, v2, v3, cfg.tau, cfg.include_positive_in_denominator, red)?;
            l_int = tape.value(li).item().expect("scalar");
            terms.push(li);
        }
        if cfg.structural {
            let probs = plain.expect("plain predictions").probs;
            let ls = structural_loss_tape(tape, v2, probs, cfg.sigma, red)?;
            l_str = tape.value(ls).item().expect("scalar");
            terms.push(ls);
        }
    }
    debug_assert_eq!(tape.shape(terms[0]).len(), 0);
    let _ = n;

    let mut total = terms[0];
    for t in &terms[1..] {
        total = tape.add(total, *t)?;
    }
    let breakdown = LossBreakdown::new(l_sup, l_int, l_str);
    Ok(TotalLoss { total, breakdown })
}
