mod common;

use patchaug::dataset::{synthetic_two_class, SyntheticSpec};
use patchaug::fgsm::{evaluate, fgsm_attack, AttackConfig};
use patchaug::model::{grad_input, grad_params, Architecture, ModelParams};
use patchaug::model::{train, LrSchedule, Split, TrainConfig};
use patchaug::pipeline::Augmentation;
use patchaug::{AugmentConfig, Dataset, Execution, RandomStream, SoftLabel};
use rand::Rng;

fn small_set(n: usize, seed: u64) -> Dataset {
    synthetic_two_class(&SyntheticSpec::new(n, seed)).unwrap()
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let data = small_set(64, 1);
    for arch in [Architecture::Linear, Architecture::Mlp { hidden: 16 }] {
        let cfg = TrainConfig {
            architecture: arch,
            epochs: 1,
            base_lr: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&data, None, &cfg).unwrap();
        let init = ModelParams::init(arch, 32 * 32 * 3, 2, 5);
        assert_eq!(out.params, init, "{arch}");
    }
}

#[test]
fn twenty_epochs_beat_chance_loss() {
    let data = small_set(1000, 2);
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&data, None, &cfg).unwrap();
    let first = out.first_row(Split::Train).unwrap();
    let last = out.final_row(Split::Train).unwrap();
    assert!(last.loss < 2f64.ln(), "final train loss {}", last.loss);
    assert!(last.loss < first.loss);
    assert_eq!(last.epoch, 20);
}

#[test]
fn augmented_training_feeds_normalized_labels() {
    let data = small_set(300, 4);
    let cfg = TrainConfig {
        epochs: 3,
        augmentation: Augmentation::Patch(AugmentConfig::random(0.9, 0.3, 0.8, 11).unwrap()),
        ..TrainConfig::default()
    };
    let out = train(&data, None, &cfg).unwrap();
    assert_eq!(out.labels_consumed, 900);
    assert!(
        out.max_label_sum_error <= 1e-9,
        "{}",
        out.max_label_sum_error
    );
}

#[test]
fn training_is_deterministic_across_execution() {
    let data = small_set(200, 6);
    let base = TrainConfig {
        epochs: 3,
        architecture: Architecture::Mlp { hidden: 8 },
        augmentation: Augmentation::Patch(AugmentConfig::default()),
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&data, Some(&data), &base).unwrap();
    let b = train(&data, Some(&data), &base).unwrap();
    let c = train(
        &data,
        Some(&data),
        &TrainConfig {
            execution: Execution::Sequential,
            ..base.clone()
        },
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn schedule_drops_at_the_listed_fractions() {
    let s = LrSchedule::default();
    let lrs: Vec<f64> = (0..20).map(|e| s.lr_at(1.0, e, 20)).collect();
    assert_eq!(lrs[9], 1.0);
    assert!((lrs[10] - 0.1).abs() < 1e-15);
    assert!((lrs[14] - 0.01).abs() < 1e-15);
    assert!((lrs[18] - 0.001).abs() < 1e-15);
    assert!((lrs[19] - 0.0005).abs() < 1e-15);
}

fn fd_check(arch: Architecture, seed: u64) -> f64 {
    let data = small_set(4, seed);
    let mut params = ModelParams::init(arch, 32 * 32 * 3, 2, seed);
    let mut rng = RandomStream::new(seed);
    // Non-zero weights everywhere so the linear model is off its symmetric point.
    if arch == Architecture::Linear {
        for i in 0..params.num_params() {
            params.set_param(i, rng.random_range(-0.01..0.01));
        }
    }
    let examples = data.examples();
    let (_, grads) = grad_params(&params, examples).unwrap();
    let flat = grads.flat();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..params.num_params());
        let p = params.param(i);
        let h = 1e-5;
        let numeric = (common::loss_with_param(&params, examples, i, p + h)
            - common::loss_with_param(&params, examples, i, p - h))
            / (2.0 * h);
        worst = worst.max(common::relative_error(flat[i], numeric));
    }
    let ex = &examples[0];
    let x = ex.image.to_f64();
    let analytic = grad_input(&params, &ex.image, &ex.label).unwrap();
    for _ in 0..100 {
        let i = rng.random_range(0..x.len());
        let numeric =
            common::central_difference(|v| params.loss(v, &ex.label).unwrap(), &x, i, 1e-5);
        worst = worst.max(common::relative_error(analytic[i], numeric));
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for arch in [Architecture::Linear, Architecture::Mlp { hidden: 256 }] {
        let err = fd_check(arch, 21);
        assert!(err < 1e-4, "{arch}: max relative error {err}");
    }
}

#[test]
fn fgsm_never_lowers_loss_of_a_linear_model() {
    let mut rng = RandomStream::new(77);
    let attack = AttackConfig {
        epsilon: 0.03,
        clip: false,
        n_examples: 1,
    };
    for case in 0..1000 {
        let mut params = ModelParams::zeros(Architecture::Linear, 4 * 4 * 3, 3);
        for i in 0..params.num_params() {
            params.set_param(i, rng.random_range(-1.0..1.0));
        }
        let img = common::banded_image(&mut rng, 4, 4, 3, 0.0, 1.0);
        let target = SoftLabel::one_hot(case % 3, 3).unwrap();
        let adv = fgsm_attack(&params, &img, &target, &attack).unwrap();
        let before = params.loss(&img.to_f64(), &target).unwrap();
        let after = params.loss(&adv.to_f64(), &target).unwrap();
        assert!(after >= before - 1e-12, "case {case}: {after} < {before}");
        for (a, b) in adv.pixels().iter().zip(img.pixels()) {
            assert!(((a - b).abs() as f64 - 0.03).abs() < 1e-6 || a == b);
        }
    }
}

#[test]
fn attack_lowers_accuracy_of_a_trained_model() {
    let data = small_set(600, 8);
    let test = small_set(300, 9);
    let out = train(
        &data,
        None,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let clean = evaluate(&out.params, &test, None).unwrap();
    let adv = evaluate(&out.params, &test, Some(&AttackConfig::new(0.03))).unwrap();
    assert!(clean > 0.6, "clean {clean}");
    assert!(adv < clean, "adv {adv} clean {clean}");
    let same = evaluate(&out.params, &test, Some(&AttackConfig::new(0.0))).unwrap();
    assert_eq!(same, clean);
}
