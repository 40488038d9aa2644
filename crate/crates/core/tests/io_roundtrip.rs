mod common;

use std::fs;

use patchaug::dataset::{
    export_png, import_png, load_cifar10, load_cifar100, read_augmented, synthetic_two_class,
    write_augmented, AugmentedDataset, Generator, SyntheticSpec, CIFAR100_RECORD_LEN,
    CIFAR10_RECORD_LEN,
};
use patchaug::pipeline::{Augmentation, BatchPipeline};
use patchaug::{AugmentConfig, Dataset, Error, Image};
use proptest::prelude::*;

fn augmented_hundred() -> (Dataset, AugmentConfig) {
    let base = synthetic_two_class(&SyntheticSpec::new(100, 3)).unwrap();
    let cfg = AugmentConfig::random(1.0, 0.3, 0.8, 17).unwrap();
    let batches = BatchPipeline::new(32, 1, Augmentation::Patch(cfg))
        .epoch_batches(&base, 0)
        .unwrap();
    let examples = batches.into_iter().flat_map(|b| b.examples).collect();
    (Dataset::new("synthetic-aug", 2, examples).unwrap(), cfg)
}

#[test]
fn container_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aug.paug");
    let (dataset, cfg) = augmented_hundred();
    let data = AugmentedDataset {
        dataset,
        generator: Generator::Patch(cfg),
    };
    write_augmented(&data, &path).unwrap();
    let back = read_augmented(&path).unwrap();
    assert_eq!(back.generator, Generator::Patch(cfg));
    for (a, b) in back.dataset.examples().iter().zip(data.dataset.examples()) {
        let bits = |img: &Image| img.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.image), bits(&b.image));
        let lbits = |l: &[f64]| l.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(lbits(a.label.probs()), lbits(b.label.probs()));
    }
    assert_eq!(back, data);
    // Writing the re-read data yields the identical file.
    let again = dir.path().join("again.paug");
    write_augmented(&back, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn header_is_plain_text_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aug.paug");
    let (dataset, cfg) = augmented_hundred();
    write_augmented(
        &AugmentedDataset {
            dataset,
            generator: Generator::Patch(cfg),
        },
        &path,
    )
    .unwrap();
    let bytes = fs::read(&path).unwrap();
    let head = String::from_utf8_lossy(&bytes[..200]);
    assert!(head.starts_with("PAUG1\n"));
    for needle in [
        "probability=1\n",
        "min_frac=0.3\n",
        "max_frac=0.8\n",
        "seed=17\n",
        "count=100\n",
    ] {
        assert!(head.contains(needle), "missing {needle:?} in {head}");
    }
}

#[test]
fn any_corrupted_byte_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("aug.paug");
    let (dataset, cfg) = augmented_hundred();
    write_augmented(
        &AugmentedDataset {
            dataset,
            generator: Generator::Patch(cfg),
        },
        &path,
    )
    .unwrap();
    let clean = fs::read(&path).unwrap();
    let len = clean.len();
    for pos in [6, 40, len / 3, len / 2, len - 40, len - 1] {
        let mut bytes = clean.clone();
        bytes[pos] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        assert!(
            matches!(read_augmented(&path), Err(Error::ChecksumMismatch)),
            "byte {pos}"
        );
    }
}

#[test]
fn png_roundtrip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_two_class(&SyntheticSpec::new(4, 8)).unwrap();
    for (i, ex) in data.examples().iter().enumerate() {
        let p = dir.path().join(format!("{i}.png"));
        export_png(&ex.image, &p).unwrap();
        let back = import_png(&p).unwrap();
        assert_eq!(back.dims(), ex.image.dims());
        for (a, b) in ex.image.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 1.0 / 255.0, "{a} vs {b}");
        }
    }
}

#[test]
fn cifar_files_load_in_order_with_asserted_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    // Two CIFAR-10 files, 25 records each, labels cycling 0..9.
    let mut paths = Vec::new();
    for f in 0..2 {
        let mut bytes = Vec::new();
        for r in 0..25u8 {
            let mut rec = vec![0u8; CIFAR10_RECORD_LEN];
            rec[0] = (f * 25 + r) % 10;
            rec[1] = r;
            bytes.extend(rec);
        }
        let p = dir.path().join(format!("data_batch_{f}.bin"));
        fs::write(&p, bytes).unwrap();
        paths.push(p);
    }
    let d = load_cifar10(&paths).unwrap();
    assert_eq!(d.len(), 50);
    assert_eq!(d.class_histogram(), vec![5; 10]);
    assert_eq!(d.get(26).image.get(0, 0, 0), 1.0 / 255.0);
    assert_eq!(d.get(26).label.as_one_hot(), Some(6));

    let mut bytes = Vec::new();
    for fine in 0..100u8 {
        let mut rec = vec![0u8; CIFAR100_RECORD_LEN];
        rec[0] = fine / 5;
        rec[1] = fine;
        bytes.extend(rec);
    }
    let p = dir.path().join("train.bin");
    fs::write(&p, &bytes).unwrap();
    let d = load_cifar100(std::slice::from_ref(&p)).unwrap();
    assert_eq!(d.class_histogram(), vec![1; 100]);

    fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(
        load_cifar100(&[p]),
        Err(Error::TruncatedRecord { .. })
    ));
}

proptest! {
    #[test]
    fn container_roundtrip_arbitrary_labels(
        weights in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..8),
        seed in any::<u64>(),
    ) {
        let examples: Vec<_> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let total: f64 = w.iter().sum::<f64>() + 1e-3;
                let mut probs: Vec<f64> = w.iter().map(|v| v / total).collect();
                probs[0] = 1.0 - probs[1] - probs[2];
                let img = common::banded_image(&mut patchaug::RandomStream::new(seed ^ i as u64), 3, 2, 1, 0.0, 1.0);
                patchaug::LabeledExample::new(img, patchaug::SoftLabel::new(probs).unwrap())
            })
            .collect();
        let data = AugmentedDataset {
            dataset: Dataset::new("p", 3, examples).unwrap(),
            generator: Generator::Mixup { alpha: 0.2, seed },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.paug");
        write_augmented(&data, &path).unwrap();
        prop_assert_eq!(read_augmented(&path).unwrap(), data);
    }
}
