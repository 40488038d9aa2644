//! Procedurally coloured two-class images, for running everything without
//! downloading CIFAR.
//!
//! Each image gets a random flat background colour, a random distractor
//! rectangle in another random colour, and per-pixel noise. The class signal
//! is a brightness gradient: class 0 images are lighter at the top, class 1
//! lighter at the bottom.

use rand::Rng;

use super::Dataset;
use crate::error::Result;
use crate::par::Execution;
use crate::rng::{domain, RandomStream};
use crate::types::{Image, LabeledExample, SoftLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub count: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Peak brightness offset of the class gradient.
    pub signal: f32,
    /// Half-width of the uniform per-pixel noise.
    pub noise: f32,
}

impl SyntheticSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            height: 32,
            width: 32,
            signal: 0.02,
            noise: 0.15,
        }
    }
}

fn generate_one(spec: &SyntheticSpec, index: usize) -> LabeledExample {
    let mut rng = RandomStream::new(spec.seed).derive_path(&[domain::SYNTHETIC, index as u64]);
    let class = index % 2;
    let (h, w) = (spec.height, spec.width);
    let bg: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    let fg: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let rw = rng.random_range(w / 4..=w / 2);
    let rh = rng.random_range(h / 4..=h / 2);
    let rx = rng.random_range(0..=w - rw);
    let ry = rng.random_range(0..=h - rh);
    let direction = if class == 0 { 1.0 } else { -1.0 };
    let mut pixels = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        // +signal at the top row, -signal at the bottom row for class 0.
        let t = if h > 1 {
            1.0 - 2.0 * r as f32 / (h - 1) as f32
        } else {
            0.0
        };
        let shift = direction * spec.signal * t;
        for c in 0..w {
            let base = if (ry..ry + rh).contains(&r) && (rx..rx + rw).contains(&c) {
                &fg
            } else {
                &bg
            };
            for &b in base {
                let n = if spec.noise > 0.0 {
                    rng.random_range(-spec.noise..spec.noise)
                } else {
                    0.0
                };
                pixels.push((b + shift + n).clamp(0.0, 1.0));
            }
        }
    }
    LabeledExample::new(
        Image::new(h, w, 3, pixels).expect("clamped pixels"),
        SoftLabel::one_hot(class, 2).expect("two classes"),
    )
}

/// Balanced two-class synthetic dataset; classes alternate by index.
pub fn synthetic_two_class(spec: &SyntheticSpec) -> Result<Dataset> {
    let examples = Execution::default().map_range(spec.count, |i| generate_one(spec, i));
    Dataset::new("synthetic", 2, examples)
}
