//! Patch augmentation and the mixup comparator.
//!
//! A patch is cut from a donor image and pasted, opaquely, over a host image
//! of the same size. The host's label keeps weight `1 - lambda` and the
//! donor's label gets `lambda = patch area / image area`, where both areas are
//! the integer pixel counts actually used.
//!
//! Everything here is a pure function of its inputs and an explicit
//! [`RandomStream`]. Random draws happen in a fixed order:
//!
//! 1. patch width fraction (random-fraction mode only)
//! 2. patch height fraction (random-fraction mode only)
//! 3. extraction `x`, then extraction `y`, in the donor
//! 4. placement `x`, then placement `y`, in the host ([`augment_example`] only)

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{Image, LabeledExample, PatchRect, SoftLabel};

/// How patch dimensions are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatchMode {
    /// Width and height fractions drawn independently from `[min_frac, max_frac]`.
    RandomFraction { min_frac: f64, max_frac: f64 },
    /// Patch covers `area_frac` of the image, same aspect ratio as the image.
    FixedAreaFraction { area_frac: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Chance that a given example in a batch is augmented.
    pub probability: f64,
    pub mode: PatchMode,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            probability: 0.9,
            mode: PatchMode::RandomFraction {
                min_frac: 0.3,
                max_frac: 0.8,
            },
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn random(probability: f64, min_frac: f64, max_frac: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            probability,
            mode: PatchMode::RandomFraction { min_frac, max_frac },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fixed(probability: f64, area_frac: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            probability,
            mode: PatchMode::FixedAreaFraction { area_frac },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidConfig(format!(
                "probability {} outside [0, 1]",
                self.probability
            )));
        }
        match self.mode {
            PatchMode::RandomFraction { min_frac, max_frac } => {
                if !unit(min_frac) || !unit(max_frac) {
                    return Err(Error::InvalidConfig(format!(
                        "fractions must lie in (0, 1], got {min_frac} and {max_frac}"
                    )));
                }
                if min_frac > max_frac {
                    return Err(Error::InvalidConfig(format!(
                        "min_frac {min_frac} > max_frac {max_frac}"
                    )));
                }
            }
            PatchMode::FixedAreaFraction { area_frac } => {
                if !unit(area_frac) {
                    return Err(Error::InvalidConfig(format!(
                        "area fraction {area_frac} outside (0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where a patch came from and where it went.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchTrace {
    /// Extraction rectangle in the donor.
    pub source: PatchRect,
    /// Placement rectangle in the host (same `w`, `h` as `source`).
    pub placed: PatchRect,
    pub lambda: f64,
}

fn frac_to_pixels(frac: f64, dim: usize) -> usize {
    ((frac * dim as f64).round() as usize).clamp(1, dim)
}

/// Samples a patch rectangle fully contained in a `host_h x host_w` image.
pub fn sample_patch_rect(
    rng: &mut RandomStream,
    host_h: usize,
    host_w: usize,
    config: &AugmentConfig,
) -> PatchRect {
    assert!(
        host_h >= 1 && host_w >= 1,
        "image dimensions must be positive"
    );
    let (w, h) = match config.mode {
        PatchMode::RandomFraction { min_frac, max_frac } => {
            let fw = rng.random_range(min_frac..=max_frac);
            let fh = rng.random_range(min_frac..=max_frac);
            (frac_to_pixels(fw, host_w), frac_to_pixels(fh, host_h))
        }
        PatchMode::FixedAreaFraction { area_frac } => {
            let side = area_frac.sqrt();
            (frac_to_pixels(side, host_w), frac_to_pixels(side, host_h))
        }
    };
    let x = rng.random_range(0..=host_w - w);
    let y = rng.random_range(0..=host_h - h);
    PatchRect { x, y, w, h }
}

pub fn extract_patch(donor: &Image, rect: PatchRect) -> Result<Image> {
    rect.check_within(donor.height(), donor.width())?;
    let c = donor.channels();
    let mut pixels = Vec::with_capacity(rect.w * rect.h * c);
    for row in rect.y..rect.y + rect.h {
        let start = donor.index(row, rect.x, 0);
        pixels.extend_from_slice(&donor.pixels()[start..start + rect.w * c]);
    }
    Image::new(rect.h, rect.w, c, pixels)
}

/// Returns a copy of `host` with `patch` written over it at `(x, y)`.
pub fn place_patch(host: &Image, patch: &Image, x: usize, y: usize) -> Result<Image> {
    if host.channels() != patch.channels() {
        return Err(Error::ChannelMismatch {
            expected: host.channels(),
            found: patch.channels(),
        });
    }
    PatchRect::new(x, y, patch.width(), patch.height())
        .check_within(host.height(), host.width())?;
    let mut out = host.clone();
    let row_len = patch.width() * patch.channels();
    for r in 0..patch.height() {
        let src = patch.index(r, 0, 0);
        let dst = out.index(y + r, x, 0);
        out.pixels_mut()[dst..dst + row_len].copy_from_slice(&patch.pixels()[src..src + row_len]);
    }
    Ok(out)
}

/// `patch_area / image_area`.
pub fn compute_lambda(patch_area: u64, image_area: u64) -> Result<f64> {
    if image_area == 0 || patch_area > image_area {
        return Err(Error::InvalidArea {
            patch_area,
            image_area,
        });
    }
    Ok(patch_area as f64 / image_area as f64)
}

/// `(1 - lambda) * y_i + lambda * y_j`
pub fn mix_labels(y_i: &SoftLabel, y_j: &SoftLabel, lambda: f64) -> Result<SoftLabel> {
    if y_i.len() != y_j.len() {
        return Err(Error::LengthMismatch(y_i.len(), y_j.len()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    let keep = 1.0 - lambda;
    let probs = y_i
        .probs()
        .iter()
        .zip(y_j.probs())
        .map(|(&a, &b)| keep * a + lambda * b)
        .collect();
    Ok(SoftLabel::from_probs_unchecked(probs))
}

/// Pastes a random patch of `donor` onto `host` and mixes their labels.
///
/// The augmentation probability is not consulted; gating belongs to the
/// batch pipeline.
pub fn augment_example(
    host: &LabeledExample,
    donor: &LabeledExample,
    rng: &mut RandomStream,
    config: &AugmentConfig,
) -> Result<LabeledExample> {
    augment_example_traced(host, donor, rng, config).map(|(ex, _)| ex)
}

/// [`augment_example`] that also reports the rectangles used.
pub fn augment_example_traced(
    host: &LabeledExample,
    donor: &LabeledExample,
    rng: &mut RandomStream,
    config: &AugmentConfig,
) -> Result<(LabeledExample, PatchTrace)> {
    if !host.image.same_dims(&donor.image) {
        return Err(Error::DimMismatch(format!(
            "host {:?} vs donor {:?}",
            host.image.dims(),
            donor.image.dims()
        )));
    }
    if host.label.len() != donor.label.len() {
        return Err(Error::LengthMismatch(host.label.len(), donor.label.len()));
    }
    let source = sample_patch_rect(rng, donor.image.height(), donor.image.width(), config);
    let patch = extract_patch(&donor.image, source)?;
    let px = rng.random_range(0..=host.image.width() - source.w);
    let py = rng.random_range(0..=host.image.height() - source.h);
    let image = place_patch(&host.image, &patch, px, py)?;
    let placed = PatchRect::new(px, py, source.w, source.h);
    let lambda = compute_lambda(placed.area(), host.image.area())?;
    let label = mix_labels(&host.label, &donor.label, lambda)?;
    Ok((
        LabeledExample { image, label },
        PatchTrace {
            source,
            placed,
            lambda,
        },
    ))
}

/// Pixelwise `(1 - lambda) * a + lambda * b`, labels mixed the same way.
pub fn mixup_example(
    a: &LabeledExample,
    b: &LabeledExample,
    lambda: f64,
) -> Result<LabeledExample> {
    if !a.image.same_dims(&b.image) {
        return Err(Error::DimMismatch(format!(
            "{:?} vs {:?}",
            a.image.dims(),
            b.image.dims()
        )));
    }
    let label = mix_labels(&a.label, &b.label, lambda)?;
    let keep = 1.0 - lambda;
    let pixels = a
        .image
        .pixels()
        .iter()
        .zip(b.image.pixels())
        .map(|(&p, &q)| (keep * f64::from(p) + lambda * f64::from(q)).clamp(0.0, 1.0) as f32)
        .collect();
    let (h, w, c) = a.image.dims();
    Ok(LabeledExample {
        image: Image::new(h, w, c, pixels)?,
        label,
    })
}
