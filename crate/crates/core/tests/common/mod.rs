//! Test-only oracles. Nothing here calls into the code path it checks.
#![allow(dead_code)]

use patchaug::model::ModelParams;
use patchaug::{Image, LabeledExample, PatchRect, RandomStream, SoftLabel};
use rand::Rng;

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += step;
    down[i] -= step;
    (f(&up) - f(&down)) / (2.0 * step)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Mean loss with parameter `i` replaced by `v`, via the forward path only.
pub fn loss_with_param(params: &ModelParams, examples: &[LabeledExample], i: usize, v: f64) -> f64 {
    let mut q = params.clone();
    q.set_param(i, v);
    examples
        .iter()
        .map(|e| q.loss(&e.image.to_f64(), &e.label).unwrap())
        .sum::<f64>()
        / examples.len() as f64
}

/// Kolmogorov-Smirnov statistic of `samples` against U[lo, hi], checking both
/// sides of every jump of the empirical CDF.
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let cdf = |v: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i];
        let before = i as f64 / n;
        let mut j = i;
        while j < samples.len() && samples[j] == v {
            j += 1;
        }
        let after = j as f64 / n;
        d = d.max((cdf(v) - before).abs()).max((after - cdf(v)).abs());
        i = j;
    }
    d
}

/// Rectangle bounding the pixels where `out` differs from `host` in any
/// channel, plus the count of differing pixels.
pub fn diff_mask(host: &Image, out: &Image) -> (Option<PatchRect>, usize) {
    let (h, w, _) = host.dims();
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            if host.pixel(r, c) != out.pixel(r, c) {
                count += 1;
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if count == 0 {
        (None, 0)
    } else {
        (
            Some(PatchRect::new(c0, r0, c1 - c0 + 1, r1 - r0 + 1)),
            count,
        )
    }
}

/// Image with every value in `[lo, hi)` quantized to multiples of 1/256, so
/// host and donor drawn from disjoint ranges never share a pixel value.
pub fn banded_image(
    rng: &mut RandomStream,
    h: usize,
    w: usize,
    c: usize,
    lo: f32,
    hi: f32,
) -> Image {
    let pixels = (0..h * w * c)
        .map(|_| {
            let v: f32 = rng.random_range(lo..hi);
            (v * 256.0).floor() / 256.0
        })
        .collect();
    Image::new(h, w, c, pixels).unwrap()
}

pub fn example(image: Image, class: usize, k: usize) -> LabeledExample {
    LabeledExample::new(image, SoftLabel::one_hot(class, k).unwrap())
}
