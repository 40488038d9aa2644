//! Fast gradient sign method and clean/adversarial accuracy.
//!
//! `x_adv = x + epsilon * sign(grad_x loss(x, y))`, with `sign(0) = 0`,
//! optionally clipped back into `[0, 1]`.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{grad_input, ModelParams};
use crate::par::Execution;
use crate::types::{Image, SoftLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    /// Max-norm perturbation size in normalized pixel units.
    pub epsilon: f64,
    /// Clamp adversarial pixels to `[0, 1]`.
    pub clip: bool,
    /// How many leading examples of the evaluation set to attack.
    pub n_examples: usize,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            clip: true,
            n_examples: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon >= 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )))
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One FGSM step against `target`.
pub fn fgsm_attack(
    params: &ModelParams,
    image: &Image,
    target: &SoftLabel,
    attack: &AttackConfig,
) -> Result<Image> {
    attack.validate()?;
    let grad = grad_input(params, image, target)?;
    if attack.epsilon == 0.0 {
        return Ok(image.clone());
    }
    let pixels = image
        .pixels()
        .iter()
        .zip(&grad)
        .map(|(&x, &g)| {
            let v = f64::from(x) + attack.epsilon * sign(g);
            (if attack.clip { v.clamp(0.0, 1.0) } else { v }) as f32
        })
        .collect();
    let (h, w, c) = image.dims();
    if attack.clip {
        Image::new(h, w, c, pixels)
    } else {
        Image::unbounded(h, w, c, pixels)
    }
}

/// Argmax accuracy on `dataset`. With an attack, each image is first replaced
/// by its FGSM counterpart computed against its true label.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    attack: Option<&AttackConfig>,
) -> Result<f64> {
    evaluate_with(Execution::default(), params, dataset, attack)
}

pub fn evaluate_with(
    exec: Execution,
    params: &ModelParams,
    dataset: &Dataset,
    attack: Option<&AttackConfig>,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = exec.try_map_slice(dataset.examples(), |_, ex| -> Result<bool> {
        let pred = match attack {
            Some(a) => {
                let adv = fgsm_attack(params, &ex.image, &ex.label, a)?;
                params.predict(&adv.to_f64())?
            }
            None => params.predict(&ex.image.to_f64())?,
        };
        Ok(pred.argmax() == ex.label.argmax())
    })?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64)
}

/// Clean and adversarial accuracy on the first `attack.n_examples` examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackRow {
    pub epsilon: f64,
    pub n_examples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
}

pub fn attack_row(
    params: &ModelParams,
    test: &Dataset,
    attack: &AttackConfig,
) -> Result<AttackRow> {
    let subset = test.head(attack.n_examples);
    Ok(AttackRow {
        epsilon: attack.epsilon,
        n_examples: subset.len(),
        clean_accuracy: evaluate(params, &subset, None)?,
        adversarial_accuracy: evaluate(params, &subset, Some(attack))?,
    })
}
