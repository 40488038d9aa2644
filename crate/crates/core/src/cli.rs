//! Command-line experiments: `augment`, `train`, `attack`, `report`.
//!
//! Settings come from an optional plain-text spec file (`key = value` lines,
//! `#` comments, keys spelled like the long flags) and are overridden by
//! command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::augment::{AugmentConfig, PatchMode};
use crate::dataset::{
    cifar10_test_files, cifar10_train_files, export_png, load_cifar10, load_cifar100,
    synthetic_two_class, write_augmented, AugmentedDataset, Dataset, Generator, SyntheticSpec,
};
use crate::fgsm::{attack_row, AttackConfig};
use crate::model::{
    load_checkpoint, save_checkpoint, train, Architecture, Checkpoint, LrSchedule, TrainConfig,
    TrainOutcome,
};
use crate::pipeline::{Augmentation, BatchPipeline};
use crate::report::{
    compare, read_metrics, render_attack, render_comparison, write_attack_csv, write_metrics,
    AttackReport, RunKey, RunMetrics,
};

#[derive(Debug, Parser)]
#[command(name = "patchaug", version, about = "Patch augmentation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment the training set once, write a PAUG1 container and PNG previews
    Augment {
        #[command(flatten)]
        opts: ExperimentArgs,
        /// Number of preview images to export
        #[arg(long, default_value_t = 8)]
        previews: usize,
    },
    /// Train a classifier, write a checkpoint and a metrics CSV
    Train {
        #[command(flatten)]
        opts: ExperimentArgs,
    },
    /// Evaluate checkpoints under FGSM for each epsilon
    Attack {
        #[command(flatten)]
        opts: ExperimentArgs,
        /// Checkpoint to attack; repeat to compare models side by side
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Combine metrics CSVs into an accuracy table
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Spec file with `key = value` lines
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// cifar10, cifar100 or synthetic
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// none, patch or mixup
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub probability: Option<f64>,
    #[arg(long)]
    pub min_frac: Option<f64>,
    #[arg(long)]
    pub max_frac: Option<f64>,
    /// Use fixed-area patches covering this fraction of the image
    #[arg(long)]
    pub fixed_area: Option<f64>,
    #[arg(long)]
    pub mixup_alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// FGSM epsilon; repeatable
    #[arg(long = "epsilon")]
    pub epsilon: Vec<f64>,
    /// Attack the first N test images
    #[arg(long)]
    pub n_attack: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// linear or mlp
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Comma-separated class subset, e.g. `0,1`
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    #[arg(long)]
    pub synthetic_train: Option<usize>,
    #[arg(long)]
    pub synthetic_test: Option<usize>,
    /// Keep dataset order instead of shuffling each epoch
    #[arg(long)]
    pub no_shuffle: bool,
    /// Let adversarial pixels leave [0, 1]
    #[arg(long)]
    pub no_clip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

impl FromStr for DatasetKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "cifar10" => Self::Cifar10,
            "cifar100" => Self::Cifar100,
            "synthetic" => Self::Synthetic,
            _ => bail!("unknown dataset {s:?} (expected cifar10, cifar100 or synthetic)"),
        })
    }
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cifar10 => "cifar10",
            Self::Cifar100 => "cifar100",
            Self::Synthetic => "synthetic",
        }
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub classes: Option<Vec<usize>>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub augmentation: Augmentation,
    pub train: TrainConfig,
    pub attacks: Vec<AttackConfig>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            data_dir: PathBuf::from("data"),
            classes: None,
            train_limit: None,
            test_limit: None,
            synthetic_train: 2000,
            synthetic_test: 1000,
            augmentation: Augmentation::None,
            train: TrainConfig::default(),
            attacks: vec![AttackConfig::new(0.001), AttackConfig::new(0.03)],
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Run label used in metrics files and tables.
pub fn augmentation_label(aug: &Augmentation) -> &'static str {
    match aug {
        Augmentation::None => "none",
        Augmentation::Patch(AugmentConfig {
            mode: PatchMode::RandomFraction { .. },
            ..
        }) => "patch-random",
        Augmentation::Patch(AugmentConfig {
            mode: PatchMode::FixedAreaFraction { .. },
            ..
        }) => "patch-fixed",
        Augmentation::Mixup { .. } => "mixup",
    }
}

/// Parses a spec file into normalized (`snake_case`) keys.
pub fn parse_spec_file(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("spec line {}: expected `key = value`, got {raw:?}", n + 1);
        };
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

struct SpecFile(BTreeMap<String, String>);

impl SpecFile {
    fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow::anyhow!("spec key {key}: {e}"))
            })
            .transpose()
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow::anyhow!("{p:?}: {e}")))
        .collect()
}

impl ExperimentSpec {
    /// Merges a spec file (if given) with command-line flags.
    pub fn from_args(args: &ExperimentArgs) -> anyhow::Result<Self> {
        let file = match &args.spec {
            Some(p) => SpecFile(parse_spec_file(
                &fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?,
            )?),
            None => SpecFile(BTreeMap::new()),
        };
        let d = ExperimentSpec::default();
        let a = args.clone();

        let dataset = match file.pick(a.dataset, "dataset")? {
            Some(s) => s.parse()?,
            None => d.dataset,
        };
        let seed = file.pick(a.seed, "seed")?.unwrap_or(d.train.seed);
        let probability = file.pick(a.probability, "probability")?.unwrap_or(0.9);
        let min_frac = file.pick(a.min_frac, "min_frac")?.unwrap_or(0.3);
        let max_frac = file.pick(a.max_frac, "max_frac")?.unwrap_or(0.8);
        let fixed_area: Option<f64> = file.pick(a.fixed_area, "fixed_area")?;
        let alpha = file.pick(a.mixup_alpha, "mixup_alpha")?.unwrap_or(0.2);
        let mode = file.pick(a.mode, "mode")?.unwrap_or_else(|| "none".into());
        let augmentation = match mode.as_str() {
            "none" => Augmentation::None,
            "patch" => Augmentation::Patch(match fixed_area {
                Some(f) => AugmentConfig::fixed(probability, f, seed)?,
                None => AugmentConfig::random(probability, min_frac, max_frac, seed)?,
            }),
            "mixup" => Augmentation::Mixup { alpha, seed },
            other => bail!("unknown mode {other:?} (expected none, patch or mixup)"),
        };
        augmentation.validate()?;

        let hidden = file.pick(a.hidden, "hidden")?.unwrap_or(256);
        let architecture = match file.pick(a.arch, "arch")?.as_deref().unwrap_or("linear") {
            "linear" => Architecture::Linear,
            "mlp" => Architecture::Mlp { hidden },
            other => bail!("unknown architecture {other:?} (expected linear or mlp)"),
        };
        let shuffle = !a.no_shuffle && file.get::<bool>("shuffle")?.unwrap_or(true);
        let train = TrainConfig {
            architecture,
            epochs: file.pick(a.epochs, "epochs")?.unwrap_or(d.train.epochs),
            batch_size: file
                .pick(a.batch_size, "batch_size")?
                .unwrap_or(d.train.batch_size),
            base_lr: file.pick(a.lr, "lr")?.unwrap_or(d.train.base_lr),
            schedule: LrSchedule::default(),
            seed,
            augmentation,
            shuffle,
            execution: d.train.execution,
        };
        train.validate()?;

        let epsilons = if !a.epsilon.is_empty() {
            a.epsilon.clone()
        } else if let Some(list) = file.0.get("epsilon") {
            parse_list(list)?
        } else {
            d.attacks.iter().map(|c| c.epsilon).collect()
        };
        let clip = !a.no_clip && file.get::<bool>("clip")?.unwrap_or(true);
        let n_attack = file.pick(a.n_attack, "n_attack")?.unwrap_or(1000);
        let attacks = epsilons
            .into_iter()
            .map(|epsilon| {
                let c = AttackConfig {
                    epsilon,
                    clip,
                    n_examples: n_attack,
                };
                c.validate().map(|_| c)
            })
            .collect::<crate::Result<Vec<_>>>()?;

        let classes = file
            .pick(a.classes, "classes")?
            .map(|s: String| parse_list::<usize>(&s))
            .transpose()?;

        Ok(Self {
            dataset,
            data_dir: file.pick(a.data_dir, "data_dir")?.unwrap_or(d.data_dir),
            classes,
            train_limit: file.pick(a.train_limit, "train_limit")?,
            test_limit: file.pick(a.test_limit, "test_limit")?,
            synthetic_train: file
                .pick(a.synthetic_train, "synthetic_train")?
                .unwrap_or(d.synthetic_train),
            synthetic_test: file
                .pick(a.synthetic_test, "synthetic_test")?
                .unwrap_or(d.synthetic_test),
            augmentation,
            train,
            attacks,
            output_dir: file.pick(a.out, "out")?.unwrap_or(d.output_dir),
        })
    }

    fn with_subset(&self, data: Dataset, limit: Option<usize>) -> anyhow::Result<Dataset> {
        let data = match &self.classes {
            Some(c) => data.select_classes(c)?,
            None => data,
        };
        Ok(match limit {
            Some(n) => data.head(n),
            None => data,
        })
    }

    /// Loads `(train, test)` according to the dataset settings.
    pub fn load(&self) -> anyhow::Result<(Dataset, Dataset)> {
        let need = |path: &Path| -> anyhow::Result<()> {
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
            Ok(())
        };
        let (train, test) = match self.dataset {
            DatasetKind::Synthetic => (
                synthetic_two_class(&SyntheticSpec::new(self.synthetic_train, self.train.seed))?,
                synthetic_two_class(&SyntheticSpec::new(
                    self.synthetic_test,
                    self.train.seed ^ 0x7e57_7e57_7e57_7e57,
                ))?,
            ),
            DatasetKind::Cifar10 => {
                let tr = cifar10_train_files(&self.data_dir);
                let te = cifar10_test_files(&self.data_dir);
                tr.iter().chain(&te).try_for_each(|p| need(p))?;
                (load_cifar10(&tr)?, load_cifar10(&te)?)
            }
            DatasetKind::Cifar100 => {
                let tr = self.data_dir.join("train.bin");
                let te = self.data_dir.join("test.bin");
                need(&tr)?;
                need(&te)?;
                (load_cifar100(&[tr])?, load_cifar100(&[te])?)
            }
        };
        Ok((
            self.with_subset(train, self.train_limit)?,
            self.with_subset(test, self.test_limit)?,
        ))
    }

    fn run_key(&self) -> RunKey {
        RunKey {
            dataset: self.dataset.as_str().to_string(),
            model: self.train.architecture.to_string(),
            augmentation: augmentation_label(&self.augmentation).to_string(),
        }
    }
}

fn generator_of(aug: &Augmentation) -> Generator {
    match *aug {
        Augmentation::None => Generator::None,
        Augmentation::Patch(cfg) => Generator::Patch(cfg),
        Augmentation::Mixup { alpha, seed } => Generator::Mixup { alpha, seed },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSummary {
    pub container: PathBuf,
    pub manifest: PathBuf,
    pub examples: usize,
    pub augmented: usize,
    pub previews: usize,
}

/// One pass of the pipeline over the training set, in dataset order.
///
/// Writes `augmented.paug`, `previews/NNN.png` with the matching unaugmented
/// `previews/NNN_host.png`, and `manifest.csv` listing each preview's label
/// and lambda.
pub fn cmd_augment(spec: &ExperimentSpec, previews: usize) -> anyhow::Result<AugmentSummary> {
    let (train_set, _) = spec.load()?;
    let pipeline = BatchPipeline {
        batch_size: spec.train.batch_size,
        shuffle: false,
        seed: spec.train.seed,
        augmentation: spec.augmentation,
        execution: spec.train.execution,
    };
    let batches = pipeline.epoch_batches(&train_set, 0)?;
    let mut examples = Vec::with_capacity(train_set.len());
    let mut slots = Vec::with_capacity(train_set.len());
    for b in batches {
        for i in 0..b.len() {
            slots.push((b.source_indices[i], b.augmented[i], b.lambdas[i]));
        }
        examples.extend(b.examples);
    }
    let augmented = slots.iter().filter(|s| s.1).count();
    let dataset = Dataset::new(train_set.name(), train_set.num_classes(), examples)?;

    let out = &spec.output_dir;
    let preview_dir = out.join("previews");
    fs::create_dir_all(&preview_dir)?;
    let container = out.join("augmented.paug");
    write_augmented(
        &AugmentedDataset {
            dataset: dataset.clone(),
            generator: generator_of(&spec.augmentation),
        },
        &container,
    )?;

    let manifest = out.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    w.write_record([
        "preview",
        "host",
        "source_index",
        "augmented",
        "lambda",
        "label",
    ])?;
    let n_prev = previews.min(dataset.len());
    for (i, &(src, aug, lambda)) in slots.iter().take(n_prev).enumerate() {
        let name = format!("{i:03}.png");
        let host = format!("{i:03}_host.png");
        export_png(&dataset.get(i).image, &preview_dir.join(&name))?;
        export_png(&train_set.get(src).image, &preview_dir.join(&host))?;
        let label = dataset
            .get(i)
            .label
            .probs()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            name,
            host,
            src.to_string(),
            aug.to_string(),
            lambda.to_string(),
            label,
        ])?;
    }
    w.flush()?;
    Ok(AugmentSummary {
        container,
        manifest,
        examples: dataset.len(),
        augmented,
        previews: n_prev,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains and writes `model.ckpt` and `metrics.csv` into the output dir.
pub fn cmd_train(spec: &ExperimentSpec) -> anyhow::Result<TrainSummary> {
    let (train_set, test_set) = spec.load()?;
    let mut config = spec.train.clone();
    config.augmentation = spec.augmentation;
    let outcome = train(&train_set, Some(&test_set), &config)?;
    fs::create_dir_all(&spec.output_dir)?;
    let checkpoint = spec.output_dir.join("model.ckpt");
    save_checkpoint(
        &Checkpoint {
            params: outcome.params.clone(),
            image_dims: train_set.dims().expect("training set is non-empty"),
            seed: config.seed,
        },
        &checkpoint,
    )?;
    let metrics = spec.output_dir.join("metrics.csv");
    write_metrics(
        &RunMetrics {
            key: spec.run_key(),
            seed: config.seed,
            rows: outcome.metrics.clone(),
        },
        &metrics,
    )?;
    Ok(TrainSummary {
        checkpoint,
        metrics,
        outcome,
    })
}

fn model_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "model" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

/// FGSM rows for every checkpoint and epsilon; writes `attack.csv` and
/// `attack.txt` into the output dir.
pub fn cmd_attack(
    spec: &ExperimentSpec,
    checkpoints: &[PathBuf],
) -> anyhow::Result<Vec<AttackReport>> {
    let (_, test_set) = spec.load()?;
    let dims = test_set.dims().context("test set is empty")?;
    let mut reports = Vec::new();
    for path in checkpoints {
        let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        ckpt.check_compatible(dims, test_set.num_classes())?;
        let rows = spec
            .attacks
            .iter()
            .map(|a| attack_row(&ckpt.params, &test_set, a))
            .collect::<crate::Result<Vec<_>>>()?;
        reports.push(AttackReport {
            model: model_name(path),
            rows,
        });
    }
    fs::create_dir_all(&spec.output_dir)?;
    write_attack_csv(&reports, &spec.output_dir.join("attack.csv"))?;
    fs::write(spec.output_dir.join("attack.txt"), render_attack(&reports))?;
    Ok(reports)
}

/// Comparison table over metrics files.
pub fn cmd_report(files: &[PathBuf]) -> anyhow::Result<String> {
    let runs = files
        .iter()
        .map(|f| read_metrics(f))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(render_comparison(&compare(&runs)?))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Augment { opts, previews } => {
            let spec = ExperimentSpec::from_args(&opts)?;
            let s = cmd_augment(&spec, previews)?;
            println!(
                "augmented {} of {} examples -> {}",
                s.augmented,
                s.examples,
                s.container.display()
            );
            println!("{} previews listed in {}", s.previews, s.manifest.display());
        }
        Command::Train { opts } => {
            let spec = ExperimentSpec::from_args(&opts)?;
            let s = cmd_train(&spec)?;
            for row in &s.outcome.metrics {
                println!(
                    "epoch {:>3} {:<5} loss {:.4} acc {:.4}",
                    row.epoch,
                    row.split.as_str(),
                    row.loss,
                    row.accuracy
                );
            }
            println!("checkpoint {}", s.checkpoint.display());
            println!("metrics    {}", s.metrics.display());
        }
        Command::Attack { opts, checkpoints } => {
            let spec = ExperimentSpec::from_args(&opts)?;
            let reports = cmd_attack(&spec, &checkpoints)?;
            print!("{}", render_attack(&reports));
        }
        Command::Report { files, out } => {
            let table = cmd_report(&files)?;
            print!("{table}");
            if let Some(out) = out {
                fs::write(out, &table)?;
            }
        }
    }
    Ok(())
}
