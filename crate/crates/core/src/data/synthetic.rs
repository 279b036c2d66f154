//! Procedural image classes standing in for CIFAR at desk scale.
//!
//! Class `k` pairs a hue with a shape. Hues cycle fastest, so neighbouring
//! classes always differ in colour, while classes sharing a hue differ only
//! in shape. Every image places its shape at a random position and scale on
//! a random dark background and adds Gaussian pixel noise.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{ImageDataset, ImageShape};
use crate::color::hsv_to_rgb;
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

pub const MAX_SYNTHETIC_CLASSES: usize = 16;
pub const MIN_SYNTHETIC_SIDE: usize = 8;

/// Standard deviation of the additive pixel noise, in intensity levels.
const PIXEL_NOISE_STD: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    Disk,
    Ring,
    Bar,
    Checker,
}

const PATTERNS: [Pattern; 4] = [Pattern::Disk, Pattern::Ring, Pattern::Bar, Pattern::Checker];

#[derive(Clone, Copy, Debug)]
struct ClassStyle {
    rgb: [f64; 3],
    pattern: Pattern,
}

fn hue_count(num_classes: usize) -> usize {
    num_classes.div_ceil(PATTERNS.len()).max(2)
}

fn class_style(k: usize, num_classes: usize) -> ClassStyle {
    let hues = hue_count(num_classes);
    let hue = (k % hues) as f64 / hues as f64;
    let pattern = PATTERNS[(k / hues) % PATTERNS.len()];
    ClassStyle { rgb: hsv_to_rgb(hue, 0.9, 1.0), pattern }
}

fn covers(pattern: Pattern, dy: f64, dx: f64, radius: f64) -> bool {
    match pattern {
        Pattern::Disk => dy * dy + dx * dx <= radius * radius,
        Pattern::Ring => {
            let d2 = dy * dy + dx * dx;
            d2 <= radius * radius && d2 >= (0.55 * radius).powi(2)
        }
        Pattern::Bar => dy.abs() <= 0.35 * radius && dx.abs() <= radius,
        Pattern::Checker => {
            if dy.abs() > radius || dx.abs() > radius {
                return false;
            }
            let cell = (radius / 2.0).max(1.5);
            let (cy, cx) = (((dy + radius) / cell).floor() as i64, ((dx + radius) / cell).floor() as i64);
            (cy + cx) % 2 == 0
        }
    }
}

fn render(style: ClassStyle, side: usize, rng: &mut Rng, out: &mut Vec<u8>) {
    let noise = Normal::new(0.0, PIXEL_NOISE_STD).expect("positive std");
    let s = side as f64;
    let background: f64 = rng.gen_range(10.0..70.0);
    let brightness: f64 = rng.gen_range(0.7..1.0);
    let radius = rng.gen_range(0.22..0.38) * s;
    let cy = rng.gen_range(0.3..0.7) * s;
    let cx = rng.gen_range(0.3..0.7) * s;
    for row in 0..side {
        for col in 0..side {
            let dy = row as f64 + 0.5 - cy;
            let dx = col as f64 + 0.5 - cx;
            let on = covers(style.pattern, dy, dx, radius);
            for ch in 0..3 {
                let base = if on { 255.0 * brightness * style.rgb[ch] } else { background };
                let v = base + noise.sample(rng);
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
}

fn build_split(num_classes: usize, n: usize, side: usize, rng: &mut Rng) -> Result<ImageDataset> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(rng);
    let mut pixels = Vec::with_capacity(n * side * side * 3);
    for &k in &labels {
        render(class_style(k, num_classes), side, rng, &mut pixels);
    }
    ImageDataset::new(ImageShape::new(side, side, 3), pixels, labels, num_classes)
}

/// Returns `(train, test)` splits with balanced classes; the output is a
/// pure function of the arguments.
pub fn generate_synthetic(
    num_classes: usize,
    n_train: usize,
    n_test: usize,
    side: usize,
    seed: u64,
) -> Result<(ImageDataset, ImageDataset)> {
    if !(2..=MAX_SYNTHETIC_CLASSES).contains(&num_classes) {
        return Err(Error::Parameter(format!(
            "synthetic data supports 2..={MAX_SYNTHETIC_CLASSES} classes, got {num_classes}"
        )));
    }
    if side < MIN_SYNTHETIC_SIDE {
        return Err(Error::Parameter(format!("image side {side} below {MIN_SYNTHETIC_SIDE}")));
    }
    if side > u16::MAX as usize {
        return Err(Error::Parameter(format!("image side {side} too large")));
    }
    let train = build_split(num_classes, n_train, side, &mut rng::stream(&[tag::SYNTH_TRAIN, seed]))?;
    let test = build_split(num_classes, n_test, side, &mut rng::stream(&[tag::SYNTH_TEST, seed]))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_classes() {
        let (train, test) = generate_synthetic(10, 100, 25, 8, 1).unwrap();
        let mut counts = [0usize; 10];
        train.clean_labels().iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 10));
        let mut counts = [0usize; 10];
        test.clean_labels().iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 2 || c == 3));
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(5, 40, 10, 12, 99).unwrap();
        let b = generate_synthetic(5, 40, 10, 12, 99).unwrap();
        let c = generate_synthetic(5, 40, 10, 12, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0.pixels(), c.0.pixels());
    }

    #[test]
    fn parameter_ranges() {
        assert!(matches!(generate_synthetic(17, 10, 10, 16, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_synthetic(1, 10, 10, 16, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_synthetic(10, 10, 10, 7, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn neighbouring_classes_differ_in_mean_colour() {
        for c in [2, 5, 10, 16] {
            let (train, _) = generate_synthetic(c, 40 * c, 0, 16, 7).unwrap();
            let mut sums = vec![[0.0f64; 3]; c];
            let mut counts = vec![0usize; c];
            for i in 0..train.len() {
                let k = train.clean_labels()[i];
                counts[k] += 1;
                for (p, &v) in train.image_bytes(i).iter().enumerate() {
                    sums[k][p % 3] += v as f64;
                }
            }
            let px = (16 * 16) as f64;
            let means: Vec<[f64; 3]> =
                sums.iter().zip(&counts).map(|(s, &n)| s.map(|v| v / (n as f64 * px) / 255.0)).collect();
            for k in 0..c - 1 {
                let gap = (0..3).map(|ch| (means[k][ch] - means[k + 1][ch]).abs()).fold(0.0, f64::max);
                assert!(gap >= 15.0 / 255.0, "C={c} classes {k},{} gap {gap}", k + 1);
            }
        }
    }
}
