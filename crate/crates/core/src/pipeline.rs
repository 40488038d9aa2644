//! Epoch-wise batching with probability-gated augmentation.
//!
//! Each epoch visits every dataset index exactly once, in a permutation
//! derived from `(seed, epoch)`. When an example is augmented its content is
//! replaced but its slot, and the source index recorded for it, stay put.
//!
//! Randomness for an example comes from a stream keyed on
//! `(augment seed, epoch, source index)`, so a batch produced on any number
//! of threads is bit-identical to one produced serially.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::augment::{augment_example_traced, mixup_example, AugmentConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{domain, RandomStream};
use crate::types::LabeledExample;

/// What happens to training examples on their way to the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    None,
    Patch(AugmentConfig),
    /// Whole-image blending with `lambda ~ Beta(alpha, alpha)` per batch.
    Mixup {
        alpha: f64,
        seed: u64,
    },
}

impl Augmentation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Augmentation::None => Ok(()),
            Augmentation::Patch(cfg) => cfg.validate(),
            Augmentation::Mixup { alpha, .. } if *alpha > 0.0 && alpha.is_finite() => Ok(()),
            Augmentation::Mixup { alpha, .. } => Err(Error::InvalidConfig(format!(
                "mixup alpha must be positive, got {alpha}"
            ))),
        }
    }
}

/// Order in which one epoch visits the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub permutation: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

impl EpochPlan {
    pub fn num_batches(&self) -> usize {
        self.permutation.len().div_ceil(self.batch_size)
    }

    /// Dataset indices of batch `b`; the last batch may be short.
    pub fn batch_indices(&self, b: usize) -> &[usize] {
        let start = b * self.batch_size;
        let end = (start + self.batch_size).min(self.permutation.len());
        &self.permutation[start..end]
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        (0..self.num_batches())
            .map(|b| self.batch_indices(b).len())
            .collect()
    }
}

/// Plans epoch `epoch`. Without `shuffle` the order is `0..N`.
pub fn new_epoch(
    dataset: &Dataset,
    batch_size: usize,
    epoch: u64,
    seed: u64,
    shuffle: bool,
) -> Result<EpochPlan> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut permutation: Vec<usize> = (0..dataset.len()).collect();
    if shuffle {
        let mut rng = RandomStream::new(seed).derive_path(&[domain::SHUFFLE, epoch]);
        permutation.shuffle(&mut rng);
    }
    Ok(EpochPlan {
        permutation,
        batch_size,
        seed,
        epoch,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: Vec<LabeledExample>,
    /// Dataset index each slot was filled from.
    pub source_indices: Vec<usize>,
    /// Whether each slot was replaced by an augmented sample.
    pub augmented: Vec<bool>,
    /// Weight given to the donor or partner in each slot (0 if untouched).
    pub lambdas: Vec<f64>,
    pub epoch_index: u64,
    pub batch_index: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Unaugmented batch `b` of `plan`.
pub fn gather_batch(dataset: &Dataset, plan: &EpochPlan, b: usize) -> Batch {
    let idx = plan.batch_indices(b);
    Batch {
        examples: idx.iter().map(|&i| dataset.get(i).clone()).collect(),
        source_indices: idx.to_vec(),
        augmented: vec![false; idx.len()],
        lambdas: vec![0.0; idx.len()],
        epoch_index: plan.epoch,
        batch_index: b,
    }
}

/// Epoch-level stream for patch augmentation under `config`.
pub fn augment_stream(config: &AugmentConfig, epoch: u64) -> RandomStream {
    RandomStream::new(config.seed).derive_path(&[domain::AUGMENT, epoch])
}

/// Replaces each example, with probability `config.probability`, by a patch
/// augmentation against a donor drawn uniformly from all of `trainset`.
///
/// `rng` is the epoch-level stream; each example draws from its own
/// substream keyed by its source index.
pub fn augment_batch(
    batch: &Batch,
    trainset: &Dataset,
    config: &AugmentConfig,
    rng: &RandomStream,
) -> Result<Batch> {
    augment_batch_with(Execution::default(), batch, trainset, config, rng)
}

pub fn augment_batch_with(
    exec: Execution,
    batch: &Batch,
    trainset: &Dataset,
    config: &AugmentConfig,
    rng: &RandomStream,
) -> Result<Batch> {
    config.validate()?;
    if trainset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let results = exec.try_map_range(batch.len(), |i| -> Result<(LabeledExample, f64, bool)> {
        let host = &batch.examples[i];
        let mut stream = rng.derive(batch.source_indices[i] as u64);
        let gate: f64 = stream.random();
        if gate < config.probability {
            let donor = trainset.get(stream.random_range(0..trainset.len()));
            let (ex, trace) = augment_example_traced(host, donor, &mut stream, config)?;
            Ok((ex, trace.lambda, true))
        } else {
            Ok((host.clone(), 0.0, false))
        }
    })?;
    let mut examples = Vec::with_capacity(results.len());
    let mut lambdas = Vec::with_capacity(results.len());
    let mut augmented = Vec::with_capacity(results.len());
    for (ex, lambda, aug) in results {
        examples.push(ex);
        lambdas.push(lambda);
        augmented.push(aug);
    }
    Ok(Batch {
        examples,
        augmented,
        lambdas,
        source_indices: batch.source_indices.clone(),
        epoch_index: batch.epoch_index,
        batch_index: batch.batch_index,
    })
}

/// Mixup comparator: one `lambda ~ Beta(alpha, alpha)` per batch, each
/// example blended with a partner drawn uniformly from `trainset`.
pub fn mixup_batch_with(
    exec: Execution,
    batch: &Batch,
    trainset: &Dataset,
    alpha: f64,
    seed: u64,
) -> Result<Batch> {
    if trainset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::InvalidConfig(format!("mixup alpha {alpha}: {e}")))?;
    let root = RandomStream::new(seed);
    let mut lambda_rng = root.derive_path(&[
        domain::MIXUP_LAMBDA,
        batch.epoch_index,
        batch.batch_index as u64,
    ]);
    let lambda = beta.sample(&mut lambda_rng).clamp(0.0, 1.0);
    let partners = root.derive_path(&[domain::AUGMENT, batch.epoch_index]);
    let examples = exec.try_map_range(batch.len(), |i| {
        let mut stream = partners.derive(batch.source_indices[i] as u64);
        let partner = trainset.get(stream.random_range(0..trainset.len()));
        mixup_example(&batch.examples[i], partner, lambda)
    })?;
    Ok(Batch {
        examples,
        augmented: vec![true; batch.len()],
        lambdas: vec![lambda; batch.len()],
        source_indices: batch.source_indices.clone(),
        epoch_index: batch.epoch_index,
        batch_index: batch.batch_index,
    })
}

/// Batching plus augmentation for a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchPipeline {
    pub batch_size: usize,
    pub shuffle: bool,
    /// Seed for epoch permutations.
    pub seed: u64,
    pub augmentation: Augmentation,
    pub execution: Execution,
}

impl BatchPipeline {
    pub fn new(batch_size: usize, seed: u64, augmentation: Augmentation) -> Self {
        Self {
            batch_size,
            shuffle: true,
            seed,
            augmentation,
            execution: Execution::default(),
        }
    }

    pub fn plan(&self, dataset: &Dataset, epoch: u64) -> Result<EpochPlan> {
        new_epoch(dataset, self.batch_size, epoch, self.seed, self.shuffle)
    }

    /// Batch `b` of `plan`, augmented. Donors come from `dataset` itself.
    pub fn batch(&self, dataset: &Dataset, plan: &EpochPlan, b: usize) -> Result<Batch> {
        let raw = gather_batch(dataset, plan, b);
        match self.augmentation {
            Augmentation::None => Ok(raw),
            Augmentation::Patch(cfg) => augment_batch_with(
                self.execution,
                &raw,
                dataset,
                &cfg,
                &augment_stream(&cfg, plan.epoch),
            ),
            Augmentation::Mixup { alpha, seed } => {
                mixup_batch_with(self.execution, &raw, dataset, alpha, seed)
            }
        }
    }

    /// Every batch of epoch `epoch`, in batch order. Batches are produced
    /// concurrently under a parallel execution; the output is unaffected.
    pub fn epoch_batches(&self, dataset: &Dataset, epoch: u64) -> Result<Vec<Batch>> {
        self.augmentation.validate()?;
        let plan = self.plan(dataset, epoch)?;
        let inner = BatchPipeline {
            execution: Execution::Sequential,
            ..*self
        };
        self.execution
            .try_map_range(plan.num_batches(), |b| inner.batch(dataset, &plan, b))
    }
}
