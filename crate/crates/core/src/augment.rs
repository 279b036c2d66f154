//! Strong and weak image transformations.
//!
//! The strong distribution composes random resized crop, horizontal flip,
//! colour jitter and random grayscale; the weak distribution stops after
//! the two geometric steps. Both draw their randomness in the same order,
//! so a strong pipeline with jitter and grayscale disabled reproduces the
//! weak one exactly from the same generator state.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::color::{hsv_to_rgb, rgb_to_hsv};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformParams {
    pub crop_scale_range: (f64, f64),
    pub crop_ratio_range: (f64, f64),
    pub flip_prob: f64,
    /// Brightness, contrast, saturation, hue.
    pub jitter_strengths: (f64, f64, f64, f64),
    pub jitter_prob: f64,
    pub grayscale_prob: f64,
    /// Set by the role a pipeline plays (weak or strong view), not by config.
    #[serde(skip)]
    pub is_strong: bool,
    /// Apply jitter sub-transforms in the listed order instead of shuffling.
    pub fixed_jitter_order: bool,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams::strong()
    }
}

impl TransformParams {
    pub fn strong() -> Self {
        TransformParams {
            crop_scale_range: (0.08, 1.0),
            crop_ratio_range: (3.0 / 4.0, 4.0 / 3.0),
            flip_prob: 0.5,
            jitter_strengths: (0.4, 0.4, 0.4, 0.1),
            jitter_prob: 0.8,
            grayscale_prob: 0.2,
            is_strong: true,
            fixed_jitter_order: false,
        }
    }

    pub fn weak() -> Self {
        TransformParams { is_strong: false, ..TransformParams::strong() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Parameter(format!("crop scale range ({lo}, {hi}) must satisfy 0 < min <= max <= 1")));
        }
        let (rlo, rhi) = self.crop_ratio_range;
        if !(rlo > 0.0 && rlo <= rhi) {
            return Err(Error::Parameter(format!("crop ratio range ({rlo}, {rhi}) is invalid")));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("jitter_prob", self.jitter_prob),
            ("grayscale_prob", self.grayscale_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let (b, c, s, h) = self.jitter_strengths;
        if b < 0.0 || c < 0.0 || s < 0.0 || !(0.0..=0.5).contains(&h) {
            return Err(Error::Parameter("jitter strengths must be >= 0 (hue <= 0.5)".into()));
        }
        Ok(())
    }
}

/// Per-channel standardization applied after scaling pixels to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    /// Statistics of a (clean) training split; near-constant channels keep
    /// unit scale.
    pub fn from_dataset(ds: &crate::data::ImageDataset) -> Self {
        let (mean, std) = ds.channel_stats();
        let std = std.into_iter().map(|s| if s < 1e-6 { 1.0 } else { s }).collect();
        Normalization { mean, std }
    }

    /// Writes the normalized pixels of `pixels` (interleaved channels) to `out`.
    pub fn apply_into(&self, pixels: &[u8], out: &mut [f64]) {
        let c = self.mean.len();
        for (i, (&p, o)) in pixels.iter().zip(out.iter_mut()).enumerate() {
            *o = (p as f64 / 255.0 - self.mean[i % c]) / self.std[i % c];
        }
    }

    pub fn apply(&self, pixels: &[u8]) -> Vec<f64> {
        let mut out = vec![0.0; pixels.len()];
        self.apply_into(pixels, &mut out);
        out
    }
}

/// Crop box `(top, left, height, width)` for a random resized crop.
fn sample_crop_box(h: usize, w: usize, scale: (f64, f64), ratio: (f64, f64), rng: &mut Rng) -> (usize, usize, usize, usize) {
    let area = (h * w) as f64;
    let (log_lo, log_hi) = (ratio.0.ln(), ratio.1.ln());
    for _ in 0..10 {
        let target = area * uniform(rng, scale.0, scale.1);
        let aspect = uniform(rng, log_lo, log_hi).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.gen_range(0..=h - ch);
            let left = rng.gen_range(0..=w - cw);
            return (top, left, ch, cw);
        }
    }
    let in_ratio = w as f64 / h as f64;
    let (ch, cw) = if in_ratio < ratio.0 {
        (((w as f64) / ratio.0).round() as usize, w)
    } else if in_ratio > ratio.1 {
        (h, ((h as f64) * ratio.1).round() as usize)
    } else {
        (h, w)
    };
    let (ch, cw) = (ch.clamp(1, h), cw.clamp(1, w));
    ((h - ch) / 2, (w - cw) / 2, ch, cw)
}

/// Uniform draw on `[lo, hi]` that tolerates `lo == hi`.
fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Bilinear resize of the box `(top, left, ch, cw)` of `img` back to the
/// full image size, sampling at half-pixel centres.
pub fn resize_crop(img: &Image, top: usize, left: usize, ch: usize, cw: usize) -> Image {
    let s = img.shape;
    let mut out = Image::filled(s, 0);
    let sy = ch as f64 / s.height as f64;
    let sx = cw as f64 / s.width as f64;
    for y in 0..s.height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (ch - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(ch - 1);
        let wy = fy - y0 as f64;
        for x in 0..s.width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (cw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(cw - 1);
            let wx = fx - x0 as f64;
            for c in 0..s.channels {
                let p = |r: usize, q: usize| img.at(top + r, left + q, c) as f64;
                let v = (1.0 - wy) * ((1.0 - wx) * p(y0, x0) + wx * p(y0, x1))
                    + wy * ((1.0 - wx) * p(y1, x0) + wx * p(y1, x1));
                out.set(y, x, c, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

pub fn random_resized_crop(img: &Image, scale: (f64, f64), ratio: (f64, f64), rng: &mut Rng) -> Image {
    let s = img.shape;
    let (top, left, ch, cw) = sample_crop_box(s.height, s.width, scale, ratio, rng);
    resize_crop(img, top, left, ch, cw)
}

pub fn flip_horizontal(img: &Image) -> Image {
    let s = img.shape;
    let mut out = img.clone();
    for y in 0..s.height {
        for x in 0..s.width {
            for c in 0..s.channels {
                out.set(y, x, c, img.at(y, s.width - 1 - x, c));
            }
        }
    }
    out
}

pub fn horizontal_flip(img: &Image, p: f64, rng: &mut Rng) -> Image {
    if rng.gen::<f64>() < p {
        flip_horizontal(img)
    } else {
        img.clone()
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Float RGB working buffer, values kept in `[0, 255]`.
struct Rgb(Vec<f64>);

impl Rgb {
    fn from_image(img: &Image) -> Self {
        Rgb(img.pixels.iter().map(|&p| p as f64).collect())
    }

    fn into_image(self, like: &Image) -> Image {
        let pixels = self.0.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Image { shape: like.shape, pixels }
    }

    fn clamp(&mut self) {
        self.0.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
    }

    fn brightness(&mut self, f: f64) {
        self.0.iter_mut().for_each(|v| *v *= f);
        self.clamp();
    }

    fn contrast(&mut self, f: f64) {
        let n = self.0.len() / 3;
        let mean = self.0.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).sum::<f64>() / n.max(1) as f64;
        self.0.iter_mut().for_each(|v| *v = (*v - mean) * f + mean);
        self.clamp();
    }

    fn saturation(&mut self, f: f64) {
        for p in self.0.chunks_exact_mut(3) {
            let g = luma(p[0], p[1], p[2]);
            p.iter_mut().for_each(|v| *v = (*v - g) * f + g);
        }
        self.clamp();
    }

    fn hue(&mut self, shift: f64) {
        for p in self.0.chunks_exact_mut(3) {
            let (h, s, v) = rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0);
            let rgb = hsv_to_rgb(h + shift, s, v);
            for c in 0..3 {
                p[c] = rgb[c] * 255.0;
            }
        }
        self.clamp();
    }
}

pub fn adjust_brightness(img: &Image, factor: f64) -> Image {
    let mut b = Rgb::from_image(img);
    b.brightness(factor);
    b.into_image(img)
}

pub fn adjust_contrast(img: &Image, factor: f64) -> Image {
    let mut b = Rgb::from_image(img);
    b.contrast(factor);
    b.into_image(img)
}

pub fn adjust_saturation(img: &Image, factor: f64) -> Image {
    let mut b = Rgb::from_image(img);
    b.saturation(factor);
    b.into_image(img)
}

/// Rotates hue by `shift` full cycles.
pub fn adjust_hue(img: &Image, shift: f64) -> Image {
    let mut b = Rgb::from_image(img);
    b.hue(shift);
    b.into_image(img)
}

/// With probability `p`, applies brightness, contrast, saturation and hue
/// adjustments (shuffled unless `fixed_order`) with strengths
/// `(b, c, s, h)`.
pub fn color_jitter(img: &Image, strengths: (f64, f64, f64, f64), p: f64, fixed_order: bool, rng: &mut Rng) -> Image {
    if img.shape.channels != 3 || rng.gen::<f64>() >= p {
        return img.clone();
    }
    let mut order = [0usize, 1, 2, 3];
    if !fixed_order {
        order.shuffle(rng);
    }
    let (sb, sc, ss, sh) = strengths;
    let mut buf = Rgb::from_image(img);
    for op in order {
        match op {
            0 if sb > 0.0 => buf.brightness(uniform(rng, (1.0 - sb).max(0.0), 1.0 + sb)),
            1 if sc > 0.0 => buf.contrast(uniform(rng, (1.0 - sc).max(0.0), 1.0 + sc)),
            2 if ss > 0.0 => buf.saturation(uniform(rng, (1.0 - ss).max(0.0), 1.0 + ss)),
            3 if sh > 0.0 => buf.hue(uniform(rng, -sh, sh)),
            _ => {}
        }
    }
    buf.into_image(img)
}

pub fn to_grayscale(img: &Image) -> Image {
    if img.shape.channels != 3 {
        return img.clone();
    }
    let mut out = img.clone();
    for p in out.pixels.chunks_exact_mut(3) {
        let g = luma(p[0] as f64, p[1] as f64, p[2] as f64).round().clamp(0.0, 255.0) as u8;
        p.fill(g);
    }
    out
}

pub fn random_grayscale(img: &Image, p: f64, rng: &mut Rng) -> Image {
    if rng.gen::<f64>() < p {
        to_grayscale(img)
    } else {
        img.clone()
    }
}

/// Runs the geometric steps, then (strong only) the colour steps, and
/// returns the 8-bit result.
pub fn transform_image(img: &Image, params: &TransformParams, rng: &mut Rng) -> Image {
    let mut out = random_resized_crop(img, params.crop_scale_range, params.crop_ratio_range, rng);
    out = horizontal_flip(&out, params.flip_prob, rng);
    if params.is_strong {
        out = color_jitter(&out, params.jitter_strengths, params.jitter_prob, params.fixed_jitter_order, rng);
        out = random_grayscale(&out, params.grayscale_prob, rng);
    }
    out
}

/// One augmented view, normalized to reals.
pub fn apply_view(img: &Image, params: &TransformParams, norm: &Normalization, rng: &mut Rng) -> Vec<f64> {
    norm.apply(&transform_image(img, params, rng).pixels)
}
