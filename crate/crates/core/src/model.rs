//! Shared MLP encoder with a softmax classifier head and a two-layer
//! projection head.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    pub num_classes: usize,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        NetworkConfig {
            input_dim,
            encoder_widths: vec![256, 128],
            projection_hidden: 128,
            projection_dim: 64,
            num_classes,
        }
    }

    pub fn representation_dim(&self) -> usize {
        *self.encoder_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() {
            return Err(Error::Parameter("encoder needs at least one hidden layer".into()));
        }
        let widths = [self.input_dim, self.projection_hidden, self.projection_dim, self.num_classes];
        if widths.iter().chain(&self.encoder_widths).any(|&w| w == 0) {
            return Err(Error::Parameter("all layer widths must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Parameter("need at least 2 classes".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every linear layer in declaration order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &w in &self.encoder_widths {
            shapes.push((prev, w));
            prev = w;
        }
        shapes.push((prev, self.num_classes));
        shapes.push((prev, self.projection_hidden));
        shapes.push((self.projection_hidden, self.projection_dim));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `fan_in × fan_out`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, rng: &mut rng::Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Linear {
            weight: Tensor::from_vec(vec![fan_in, fan_out], w).expect("sized"),
            bias: Tensor::zeros(vec![fan_out]),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear { weight: Tensor::zeros(vec![fan_in, fan_out]), bias: Tensor::zeros(vec![fan_out]) }
    }
}

/// θ₁ (encoder), θ₂ (classifier) and θ₃ (projection head).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: NetworkConfig,
    pub encoder: Vec<Linear>,
    pub classifier: Linear,
    pub projection: [Linear; 2],
}

/// Kaiming-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = rng::stream(&[tag::INIT, seed]);
    let shapes = cfg.layer_shapes();
    let n_enc = cfg.encoder_widths.len();
    let encoder = shapes[..n_enc].iter().map(|&(i, o)| Linear::init(i, o, &mut rng)).collect();
    let classifier = Linear::init(shapes[n_enc].0, shapes[n_enc].1, &mut rng);
    let p1 = Linear::init(shapes[n_enc + 1].0, shapes[n_enc + 1].1, &mut rng);
    let p2 = Linear::init(shapes[n_enc + 2].0, shapes[n_enc + 2].1, &mut rng);
    let params = ModelParams { config: cfg.clone(), encoder, classifier, projection: [p1, p2] };
    debug_assert_eq!(params.parameter_count(), cfg.parameter_count());
    Ok(params)
}

impl ModelParams {
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let shapes = cfg.layer_shapes();
        let n_enc = cfg.encoder_widths.len();
        let z = |k: usize| Linear::zeros(shapes[k].0, shapes[k].1);
        Ok(ModelParams {
            config: cfg.clone(),
            encoder: (0..n_enc).map(z).collect(),
            classifier: z(n_enc),
            projection: [z(n_enc + 1), z(n_enc + 2)],
        })
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.encoder.iter().chain(std::iter::once(&self.classifier)).chain(self.projection.iter())
    }

    /// Every tensor in declaration order: each layer's weight then bias,
    /// encoder first, then classifier, then projection head.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.classifier))
            .chain(self.projection.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Human-readable names matching [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.encoder.len() {
            names.push(format!("encoder.{i}.weight"));
            names.push(format!("encoder.{i}.bias"));
        }
        names.extend(["classifier.weight".into(), "classifier.bias".into()]);
        for i in 0..2 {
            names.push(format!("projection.{i}.weight"));
            names.push(format!("projection.{i}.bias"));
        }
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Places every tensor on the tape as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut bind = |l: &Linear| BoundLinear {
            weight: tape.leaf(l.weight.clone(), true),
            bias: tape.leaf(l.bias.clone(), true),
        };
        let encoder = self.encoder.iter().map(&mut bind).collect();
        let classifier = bind(&self.classifier);
        let projection = [bind(&self.projection[0]), bind(&self.projection[1])];
        BoundParams { encoder, classifier, projection }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }
}

/// Model parameters as tape variables.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub encoder: Vec<BoundLinear>,
    pub classifier: BoundLinear,
    pub projection: [BoundLinear; 2],
}

impl BoundParams {
    /// Variables in the same order as [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.classifier))
            .chain(self.projection.iter())
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }
}

/// Representation `u = f(x)`: relu after every encoder layer.
pub fn encode(tape: &mut Tape, x: Var, params: &BoundParams) -> Result<Var> {
    let mut h = x;
    for layer in &params.encoder {
        let z = layer.forward(tape, h)?;
        h = tape.relu(z)?;
    }
    Ok(h)
}

/// Classifier outputs for one batch of representations.
#[derive(Clone, Copy, Debug)]
pub struct Classified {
    pub logits: Var,
    pub log_probs: Var,
    /// Softmax probabilities `ỹ`.
    pub probs: Var,
}

pub fn classify(tape: &mut Tape, u: Var, params: &BoundParams) -> Result<Classified> {
    let logits = params.classifier.forward(tape, u)?;
    let log_probs = tape.log_softmax(logits)?;
    let probs = tape.exp(log_probs)?;
    Ok(Classified { logits, log_probs, probs })
}

/// Projection `v = h(u)`: linear, relu, linear. Not normalized.
pub fn project(tape: &mut Tape, u: Var, params: &BoundParams) -> Result<Var> {
    let z = params.projection[0].forward(tape, u)?;
    let a = tape.relu(z)?;
    params.projection[1].forward(tape, a)
}

/// Three augmented views of one mini-batch plus one-hot noisy labels.
#[derive(Clone, Debug)]
pub struct BatchViews {
    /// Weak view `x̃₁`, `b × input_dim`.
    pub weak: Tensor,
    /// Strong views `x̃₂`, `x̃₃`.
    pub strong: [Tensor; 2],
    /// `b × num_classes`.
    pub labels: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct ViewOutputs {
    pub predictions: Classified,
    pub v2: Var,
    pub v3: Var,
}

/// `ỹ = g(f(x̃₁))`, `v₂ = h(f(x̃₂))`, `v₃ = h(f(x̃₃))` with one shared encoder.
pub fn forward_views(tape: &mut Tape, views: &BatchViews, params: &BoundParams) -> Result<ViewOutputs> {
    let x1 = tape.constant(views.weak.clone());
    let u1 = encode(tape, x1, params)?;
    let predictions = classify(tape, u1, params)?;
    let x2 = tape.constant(views.strong[0].clone());
    let u2 = encode(tape, x2, params)?;
    let v2 = project(tape, u2, params)?;
    let x3 = tape.constant(views.strong[1].clone());
    let u3 = encode(tape, x3, params)?;
    let v3 = project(tape, u3, params)?;
    Ok(ViewOutputs { predictions, v2, v3 })
}

/// Class probabilities for a batch of already-normalized inputs, without
/// recording gradients.
pub fn predict_probs(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = bind_constant(params, &mut tape);
    let xv = tape.constant(x.clone());
    let u = encode(&mut tape, xv, &bound)?;
    let c = classify(&mut tape, u, &bound)?;
    Ok(tape.value(c.probs).clone())
}

/// Encoder → classifier logits, for argmax evaluation.
pub fn predict_logits(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = bind_constant(params, &mut tape);
    let xv = tape.constant(x.clone());
    let u = encode(&mut tape, xv, &bound)?;
    let logits = bound.classifier.forward(&mut tape, u)?;
    Ok(tape.value(logits).clone())
}

fn bind_constant(params: &ModelParams, tape: &mut Tape) -> BoundParams {
    let mut bind = |l: &Linear| BoundLinear {
        weight: tape.constant(l.weight.clone()),
        bias: tape.constant(l.bias.clone()),
    };
    let encoder = params.encoder.iter().map(&mut bind).collect();
    let classifier = bind(&params.classifier);
    let projection = [bind(&params.projection[0]), bind(&params.projection[1])];
    BoundParams { encoder, classifier, projection }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLMP";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Writes a checkpoint: magic, version, config fields, then every tensor
/// as little-endian `f64` in declaration order.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let cfg = &params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let fields = [cfg.input_dim, cfg.num_classes, cfg.projection_hidden, cfg.projection_dim, cfg.encoder_widths.len()];
    for v in fields.iter().chain(&cfg.encoder_widths) {
        let v = u32::try_from(*v).map_err(|_| Error::Format(format!("config value {v} exceeds u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io("<checkpoint stream>", e))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<checkpoint stream>", e))?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing CLMP magic".into()));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut u32_field = || -> Result<usize> { Ok(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize) };
    let input_dim = u32_field()?;
    let num_classes = u32_field()?;
    let projection_hidden = u32_field()?;
    let projection_dim = u32_field()?;
    let depth = u32_field()?;
    if depth > 64 {
        return Err(Error::Format(format!("implausible encoder depth {depth}")));
    }
    let encoder_widths = (0..depth).map(|_| u32_field()).collect::<Result<Vec<_>>>()?;
    let cfg = NetworkConfig { input_dim, encoder_widths, projection_hidden, projection_dim, num_classes };
    cfg.validate().map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let mut params = ModelParams::zeros(&cfg)?;
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            *x = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        }
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - pos)));
    }
    Ok(params)
}

impl ModelParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(self, std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(std::io::BufReader::new(f))
    }
}
