use super::{grad_params_with, Architecture, ModelParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pipeline::{Augmentation, BatchPipeline};
use crate::types::LABEL_SUM_TOLERANCE;

/// Step learning-rate schedule: at each `(fraction, multiplier)` the rate is
/// multiplied once epoch `fraction * total` is reached.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub breakpoints: Vec<(f64, f64)>,
}

impl Default for LrSchedule {
    /// Drops after 50%, 70%, 90% (x0.1 each) and 95% (x0.5) of training.
    fn default() -> Self {
        Self {
            breakpoints: vec![(0.5, 0.1), (0.7, 0.1), (0.9, 0.1), (0.95, 0.5)],
        }
    }
}

impl LrSchedule {
    pub fn constant() -> Self {
        Self {
            breakpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for &(frac, mult) in &self.breakpoints {
            if !(0.0..=1.0).contains(&frac) || frac <= last {
                return Err(Error::InvalidConfig(
                    "schedule fractions must increase within [0, 1]".into(),
                ));
            }
            if !mult.is_finite() || mult <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "schedule multiplier {mult} must be positive"
                )));
            }
            last = frac;
        }
        Ok(())
    }

    /// Learning rate for zero-based `epoch` of `total`.
    pub fn lr_at(&self, base: f64, epoch: usize, total: usize) -> f64 {
        self.breakpoints
            .iter()
            .filter(|(frac, _)| epoch as f64 >= frac * total as f64)
            .fold(base, |lr, (_, m)| lr * m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub augmentation: Augmentation,
    pub shuffle: bool,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            epochs: 20,
            batch_size: 32,
            base_lr: 0.001,
            schedule: LrSchedule::default(),
            seed: 0,
            augmentation: Augmentation::None,
            shuffle: true,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} is invalid",
                self.base_lr
            )));
        }
        if let Architecture::Mlp { hidden: 0 } = self.architecture {
            return Err(Error::InvalidConfig("MLP needs hidden units".into()));
        }
        self.schedule.validate()?;
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One `(epoch, split, loss, accuracy)` metrics row. Epoch 0 is the model
/// before any update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: Vec<MetricRow>,
    /// Training labels fed to the model.
    pub labels_consumed: usize,
    /// Largest `|sum(label) - 1|` among them.
    pub max_label_sum_error: f64,
}

impl TrainOutcome {
    pub fn final_row(&self, split: Split) -> Option<&MetricRow> {
        self.metrics.iter().rev().find(|r| r.split == split)
    }

    pub fn first_row(&self, split: Split) -> Option<&MetricRow> {
        self.metrics.iter().find(|r| r.split == split)
    }
}

/// Mean cross-entropy and argmax accuracy on (unaugmented) `dataset`.
pub fn evaluate_clean(
    params: &ModelParams,
    dataset: &Dataset,
    exec: Execution,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per = exec.try_map_slice(dataset.examples(), |_, ex| -> Result<(f64, bool)> {
        let pred = params.predict(&ex.image.to_f64())?;
        Ok((
            super::cross_entropy(&pred, &ex.label)?,
            pred.argmax() == ex.label.argmax(),
        ))
    })?;
    let n = per.len() as f64;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    let acc = per.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((loss, acc))
}

fn record(
    rows: &mut Vec<MetricRow>,
    params: &ModelParams,
    epoch: usize,
    train: &Dataset,
    test: Option<&Dataset>,
    exec: Execution,
) -> Result<()> {
    let (loss, accuracy) = evaluate_clean(params, train, exec)?;
    rows.push(MetricRow {
        epoch,
        split: Split::Train,
        loss,
        accuracy,
    });
    if let Some(test) = test.filter(|t| !t.is_empty()) {
        let (loss, accuracy) = evaluate_clean(params, test, exec)?;
        rows.push(MetricRow {
            epoch,
            split: Split::Test,
            loss,
            accuracy,
        });
    }
    Ok(())
}

/// Minibatch SGD on mean cross-entropy, batches from a [`BatchPipeline`]
/// built from `config`.
///
/// Metrics rows for both splits are evaluated on clean data before training
/// and after every epoch.
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (h, w, c) = train_set.dims().ok_or(Error::EmptyDataset)?;
    let mut params = ModelParams::init(
        config.architecture,
        h * w * c,
        train_set.num_classes(),
        config.seed,
    );
    let pipeline = BatchPipeline {
        batch_size: config.batch_size,
        shuffle: config.shuffle,
        seed: config.seed,
        augmentation: config.augmentation,
        execution: config.execution,
    };
    let exec = config.execution;
    let mut metrics = Vec::new();
    record(&mut metrics, &params, 0, train_set, test_set, exec)?;

    let mut labels_consumed = 0;
    let mut max_label_sum_error: f64 = 0.0;
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(config.base_lr, epoch, config.epochs);
        let plan = pipeline.plan(train_set, epoch as u64)?;
        for b in 0..plan.num_batches() {
            let batch = pipeline.batch(train_set, &plan, b)?;
            for ex in &batch.examples {
                let err = (ex.label.sum() - 1.0).abs();
                max_label_sum_error = max_label_sum_error.max(err);
                if err > LABEL_SUM_TOLERANCE {
                    return Err(Error::InvalidLabel(format!(
                        "training label sums to {}",
                        ex.label.sum()
                    )));
                }
            }
            labels_consumed += batch.len();
            let (_, grads) = grad_params_with(exec, &params, &batch.examples)?;
            if lr != 0.0 {
                params.apply_gradients(&grads, lr);
            }
        }
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "parameters diverged in epoch {}; lower the learning rate",
                epoch + 1
            )));
        }
        record(&mut metrics, &params, epoch + 1, train_set, test_set, exec)?;
    }
    Ok(TrainOutcome {
        params,
        metrics,
        labels_consumed,
        max_label_sum_error,
    })
}
