//! Datasets: CIFAR binary ingestion, a synthetic two-class set, PNG export
//! and the `PAUG1` container for augmented data.

mod cifar;
mod container;
mod png;
mod synthetic;

pub use cifar::{
    cifar10_test_files, cifar10_train_files, decode_cifar10, decode_cifar100, load_cifar10,
    load_cifar100, CIFAR100_RECORD_LEN, CIFAR10_RECORD_LEN, CIFAR_PIXELS,
};
pub use container::{
    read_augmented, write_augmented, AugmentedDataset, Generator, CONTAINER_MAGIC,
};
pub use png::{export_png, import_png};
pub use synthetic::{synthetic_two_class, SyntheticSpec};

use crate::error::{Error, Result};
use crate::types::{LabeledExample, SoftLabel};

/// One-hot label for class `index` out of `k`.
pub fn one_hot(index: usize, k: usize) -> Result<SoftLabel> {
    SoftLabel::one_hot(index, k)
}

/// Ordered examples sharing one image shape and one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    name: String,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        examples: Vec<LabeledExample>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidConfig(
                "dataset needs at least one class".into(),
            ));
        }
        if let Some(first) = examples.first() {
            let dims = first.image.dims();
            for (i, ex) in examples.iter().enumerate() {
                if ex.image.dims() != dims {
                    return Err(Error::DimMismatch(format!(
                        "example {i} is {:?}, expected {dims:?}",
                        ex.image.dims()
                    )));
                }
                if ex.label.len() != num_classes {
                    return Err(Error::LengthMismatch(ex.label.len(), num_classes));
                }
            }
        }
        Ok(Self {
            examples,
            num_classes,
            name: name.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, i: usize) -> &LabeledExample {
        &self.examples[i]
    }

    /// `(height, width, channels)` of every image, `None` when empty.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.examples.first().map(|e| e.image.dims())
    }

    /// First `n` examples (or all if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            examples: self.examples.iter().take(n).cloned().collect(),
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }

    /// Keeps examples whose hard class is in `classes`, relabelled to the
    /// position of that class in the list.
    pub fn select_classes(&self, classes: &[usize]) -> Result<Dataset> {
        if classes.is_empty() {
            return Err(Error::InvalidConfig("no classes selected".into()));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                classes: self.num_classes,
            });
        }
        let mut examples = Vec::new();
        for ex in &self.examples {
            let class = ex.label.argmax();
            if let Some(pos) = classes.iter().position(|&c| c == class) {
                examples.push(LabeledExample::new(
                    ex.image.clone(),
                    one_hot(pos, classes.len())?,
                ));
            }
        }
        let name = format!(
            "{}[{}]",
            self.name,
            classes
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        Dataset::new(name, classes.len(), examples)
    }

    /// Per-class counts of the hard (argmax) labels.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label.argmax()] += 1;
        }
        counts
    }
}
