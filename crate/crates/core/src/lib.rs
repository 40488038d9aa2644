//! Patch augmentation: new training images made by pasting a random patch of
//! a donor image over a host image, with labels mixed in proportion to the
//! patch's pixel area. Also ships a mixup comparator, a small differentiable
//! classifier, and an FGSM harness for measuring adversarial robustness.

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod fgsm;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod types;

pub use augment::{
    augment_example, augment_example_traced, compute_lambda, extract_patch, mix_labels,
    mixup_example, place_patch, sample_patch_rect, AugmentConfig, PatchMode, PatchTrace,
};
pub use dataset::{one_hot, Dataset};
pub use error::{Error, Result};
pub use par::Execution;
pub use rng::RandomStream;
pub use types::{Image, LabeledExample, PatchRect, SoftLabel};
