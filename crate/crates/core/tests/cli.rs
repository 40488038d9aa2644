mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use patchaug::cli::{
    cmd_attack, cmd_augment, cmd_report, cmd_train, parse_spec_file, Cli, ExperimentSpec,
};
use patchaug::dataset::{read_augmented, synthetic_two_class, SyntheticSpec, CIFAR10_RECORD_LEN};
use patchaug::pipeline::{Augmentation, BatchPipeline};
use patchaug::{Error, PatchMode};

fn spec_from(args: &[&str]) -> ExperimentSpec {
    let mut argv = vec!["patchaug", "train"];
    argv.extend_from_slice(args);
    match Cli::try_parse_from(argv).unwrap().command {
        patchaug::cli::Command::Train { opts } => ExperimentSpec::from_args(&opts).unwrap(),
        _ => unreachable!(),
    }
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn augment_at_zero_probability_reproduces_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let spec = spec_from(&[
        "--mode",
        "patch",
        "--probability",
        "0",
        "--synthetic-train",
        "100",
        "--out",
        &out,
    ]);
    let s = cmd_augment(&spec, 4).unwrap();
    assert_eq!(s.augmented, 0);
    let back = read_augmented(&s.container).unwrap();
    let (train, _) = spec.load().unwrap();
    assert_eq!(back.dataset.examples(), train.examples());
}

#[test]
fn augment_manifest_agrees_with_previews() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let spec = spec_from(&[
        "--mode",
        "patch",
        "--probability",
        "1",
        "--synthetic-train",
        "64",
        "--seed",
        "4",
        "--out",
        &out,
    ]);
    let s = cmd_augment(&spec, 16).unwrap();
    assert_eq!(s.augmented, 64);
    let mut rd = csv::Reader::from_path(&s.manifest).unwrap();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        rows += 1;
        let lambda: f64 = rec[4].parse().unwrap();
        let label: Vec<f64> = rec[5].split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&rec[3], "true");
        assert!((label.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        // Each entry is 0, 1, lambda, 1 - lambda or their sum for a same-class donor.
        for p in &label {
            let ok = [0.0, 1.0, lambda, 1.0 - lambda]
                .iter()
                .any(|c| (p - c).abs() <= 1e-12);
            assert!(ok, "label {label:?} lambda {lambda}");
        }
        // Lambda is the pasted area, read back from the exported pixels.
        let preview =
            patchaug::dataset::import_png(&dir.path().join("previews").join(&rec[0])).unwrap();
        let host =
            patchaug::dataset::import_png(&dir.path().join("previews").join(&rec[1])).unwrap();
        let (rect, _) = common::diff_mask(&host, &preview);
        let rect = rect.expect("augmented preview differs from its host");
        let area = (preview.dims().0 * preview.dims().1) as f64;
        assert_eq!(rect.area() as f64 / area, lambda, "{}", &rec[0]);
    }
    assert_eq!(rows, 16);
}

#[test]
fn mixup_lambdas_follow_the_beta_moments() {
    // One lambda per batch, so batches of one give one sample per example.
    let mut spec = SyntheticSpec::new(6000, 1);
    spec.height = 2;
    spec.width = 2;
    let data = synthetic_two_class(&spec).unwrap();
    let pipeline = BatchPipeline::new(
        1,
        3,
        Augmentation::Mixup {
            alpha: 0.2,
            seed: 3,
        },
    );
    let lambdas: Vec<f64> = pipeline
        .epoch_batches(&data, 0)
        .unwrap()
        .iter()
        .map(|b| b.lambdas[0])
        .collect();
    let n = lambdas.len() as f64;
    let mean = lambdas.iter().sum::<f64>() / n;
    let var = lambdas.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Beta(a, a): mean 1/2, variance 1 / (4 (2a + 1)).
    let expected_var = 1.0 / (4.0 * (2.0 * 0.2 + 1.0));
    assert!((mean - 0.5).abs() < 0.03, "mean {mean}");
    assert!(
        (var - expected_var).abs() < 0.01,
        "var {var} vs {expected_var}"
    );
}

#[test]
fn training_twice_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common_args = [
        "--mode",
        "patch",
        "--epochs",
        "2",
        "--synthetic-train",
        "200",
        "--synthetic-test",
        "100",
    ];
    let run = |dir: &Path| {
        let out = out_arg(dir);
        let mut args = common_args.to_vec();
        args.extend(["--out", &out]);
        cmd_train(&spec_from(&args)).unwrap()
    };
    let sa = run(a.path());
    let sb = run(b.path());
    assert_eq!(
        fs::read(&sa.metrics).unwrap(),
        fs::read(&sb.metrics).unwrap()
    );
    assert_eq!(
        fs::read(&sa.checkpoint).unwrap(),
        fs::read(&sb.checkpoint).unwrap()
    );
    let text = fs::read_to_string(&sa.metrics).unwrap();
    assert!(text.contains("# augmentation=patch-random"));
    assert!(text.contains("epoch,split,loss,accuracy"));
}

fn write_fake_cifar10(dir: &Path) {
    let mut bytes = Vec::new();
    for i in 0..20u8 {
        let mut rec = vec![i.wrapping_mul(37); CIFAR10_RECORD_LEN];
        rec[0] = i % 10;
        bytes.extend(rec);
    }
    for f in 1..=5 {
        fs::write(dir.join(format!("data_batch_{f}.bin")), &bytes).unwrap();
    }
    fs::write(dir.join("test_batch.bin"), &bytes).unwrap();
}

#[test]
fn attack_pairs_checkpoints_and_rejects_mismatches() {
    let root = tempfile::tempdir().unwrap();
    let mut ckpts = Vec::new();
    for mode in ["none", "patch"] {
        let dir = root.path().join(mode);
        let out = out_arg(&dir);
        let spec = spec_from(&[
            "--mode",
            mode,
            "--epochs",
            "2",
            "--synthetic-train",
            "200",
            "--synthetic-test",
            "100",
            "--out",
            &out,
        ]);
        ckpts.push(cmd_train(&spec).unwrap().checkpoint);
    }
    let out = out_arg(&root.path().join("attack"));
    let spec = spec_from(&[
        "--epsilon",
        "0",
        "--epsilon",
        "0.03",
        "--synthetic-train",
        "200",
        "--synthetic-test",
        "100",
        "--n-attack",
        "50",
        "--out",
        &out,
    ]);
    let reports = cmd_attack(&spec, &ckpts).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].model, "none");
    assert_eq!(reports[1].model, "patch");
    for rep in &reports {
        assert_eq!(rep.rows[0].clean_accuracy, rep.rows[0].adversarial_accuracy);
        assert_eq!(rep.rows[0].n_examples, 50);
    }
    let text = fs::read_to_string(root.path().join("attack/attack.txt")).unwrap();
    assert!(text.contains("patch adversarial accuracy"), "{text}");

    // Ten-class 32x32 data against a two-class checkpoint.
    let cifar = root.path().join("cifar");
    fs::create_dir_all(&cifar).unwrap();
    write_fake_cifar10(&cifar);
    let data_dir = out_arg(&cifar);
    let spec = spec_from(&[
        "--dataset",
        "cifar10",
        "--data-dir",
        &data_dir,
        "--out",
        &out,
    ]);
    let err = cmd_attack(&spec, &ckpts[..1]).unwrap_err();
    assert!(
        matches!(
            err.downcast_ref::<Error>(),
            Some(Error::CheckpointMismatch(_))
        ),
        "{err:#}"
    );
}

#[test]
fn report_has_one_column_per_mode() {
    let root = tempfile::tempdir().unwrap();
    let mut files: Vec<PathBuf> = Vec::new();
    for mode in [
        &["--mode", "none"][..],
        &["--mode", "patch", "--fixed-area", "0.25"],
        &["--mode", "mixup"],
    ] {
        let dir = root.path().join(files.len().to_string());
        let out = out_arg(&dir);
        let mut args = mode.to_vec();
        args.extend([
            "--epochs",
            "1",
            "--synthetic-train",
            "100",
            "--synthetic-test",
            "50",
            "--out",
            &out,
        ]);
        files.push(cmd_train(&spec_from(&args)).unwrap().metrics);
    }
    let table = cmd_report(&files).unwrap();
    let header = table.lines().next().unwrap();
    for col in ["none", "patch-fixed", "mixup"] {
        assert!(header.contains(col), "{table}");
    }
    assert!(!header.contains("patch-random"), "{table}");
    assert_eq!(
        table.lines().filter(|l| l.contains("synthetic")).count(),
        1,
        "{table}"
    );
}

#[test]
fn spec_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.spec");
    fs::write(
        &path,
        "# baseline patch run\nmode = patch\nmin-frac = 0.4\nmax_frac = 0.6\nepochs = 7\nepsilon = 0.001, 0.03\nseed = 12\n",
    )
    .unwrap();
    let p = path.display().to_string();
    let spec = spec_from(&["--spec", &p, "--epochs", "3"]);
    assert_eq!(spec.train.epochs, 3);
    assert_eq!(spec.train.seed, 12);
    assert_eq!(
        spec.attacks.iter().map(|a| a.epsilon).collect::<Vec<_>>(),
        vec![0.001, 0.03]
    );
    match spec.augmentation {
        Augmentation::Patch(cfg) => {
            assert_eq!(
                cfg.mode,
                PatchMode::RandomFraction {
                    min_frac: 0.4,
                    max_frac: 0.6
                }
            );
            assert_eq!(cfg.probability, 0.9);
            assert_eq!(cfg.seed, 12);
        }
        other => panic!("{other:?}"),
    }
    assert!(parse_spec_file("no equals sign").is_err());
    let bad = dir.path().join("bad.spec");
    fs::write(&bad, "mode = cutout\n").unwrap();
    let b = bad.display().to_string();
    let patchaug::cli::Command::Train { opts } =
        Cli::try_parse_from(["patchaug", "train", "--spec", &b])
            .unwrap()
            .command
    else {
        unreachable!()
    };
    assert!(ExperimentSpec::from_args(&opts).is_err());
}

#[test]
fn binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let bin = env!("CARGO_BIN_EXE_patchaug");
    let train = Command::new(bin)
        .args([
            "train",
            "--epochs",
            "1",
            "--synthetic-train",
            "100",
            "--synthetic-test",
            "50",
            "--out",
            &out,
        ])
        .output()
        .unwrap();
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );
    assert!(String::from_utf8_lossy(&train.stdout).contains("epoch   1 test"));
    let bad = Command::new(bin)
        .args(["train", "--mode", "cutout"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: unknown mode"));
}
