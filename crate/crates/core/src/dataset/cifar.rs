use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::types::{Image, LabeledExample, SoftLabel};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;
pub const CIFAR10_RECORD_LEN: usize = 1 + CIFAR_PIXELS;
pub const CIFAR100_RECORD_LEN: usize = 2 + CIFAR_PIXELS;

/// Standard file names inside `cifar-10-batches-bin`.
pub fn cifar10_train_files(dir: &Path) -> Vec<PathBuf> {
    (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .collect()
}

pub fn cifar10_test_files(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join("test_batch.bin")]
}

/// Channel-planar bytes (all R, all G, all B) to a normalized HWC image.
fn planar_to_image(bytes: &[u8]) -> Image {
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut pixels = vec![0f32; CIFAR_PIXELS];
    for (i, px) in pixels.chunks_exact_mut(3).enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            *v = f32::from(bytes[c * plane + i]) / 255.0;
        }
    }
    Image::new(CIFAR_SIDE, CIFAR_SIDE, 3, pixels).expect("byte pixels are in range")
}

fn decode(
    path: &Path,
    bytes: &[u8],
    record_len: usize,
    label_offset: usize,
    classes: usize,
) -> Result<Vec<LabeledExample>> {
    if !bytes.len().is_multiple_of(record_len) {
        return Err(Error::TruncatedRecord {
            path: path.to_path_buf(),
            len: bytes.len(),
            record: record_len,
        });
    }
    bytes
        .chunks_exact(record_len)
        .map(|rec| {
            let class = rec[label_offset];
            if usize::from(class) >= classes {
                return Err(Error::LabelOutOfRange {
                    label: class,
                    max: (classes - 1) as u8,
                });
            }
            let image = planar_to_image(&rec[record_len - CIFAR_PIXELS..]);
            Ok(LabeledExample::new(
                image,
                SoftLabel::one_hot(class.into(), classes)?,
            ))
        })
        .collect()
}

/// Decodes raw CIFAR-10 records (label byte + 3072 pixel bytes).
pub fn decode_cifar10(bytes: &[u8]) -> Result<Vec<LabeledExample>> {
    decode(Path::new("<memory>"), bytes, CIFAR10_RECORD_LEN, 0, 10)
}

/// Decodes raw CIFAR-100 records, keeping the fine label.
pub fn decode_cifar100(bytes: &[u8]) -> Result<Vec<LabeledExample>> {
    decode(Path::new("<memory>"), bytes, CIFAR100_RECORD_LEN, 1, 100)
}

fn load(
    name: &str,
    paths: &[PathBuf],
    record_len: usize,
    label_offset: usize,
    classes: usize,
) -> Result<Dataset> {
    let per_file = Execution::default().try_map_range(paths.len(), |i| {
        let bytes = fs::read(&paths[i])?;
        decode(&paths[i], &bytes, record_len, label_offset, classes)
    })?;
    Dataset::new(name, classes, per_file.into_iter().flatten().collect())
}

/// Loads CIFAR-10 binary batch files, in the order given.
pub fn load_cifar10(paths: &[PathBuf]) -> Result<Dataset> {
    load("cifar10", paths, CIFAR10_RECORD_LEN, 0, 10)
}

/// Loads CIFAR-100 binary files using the fine labels.
pub fn load_cifar100(paths: &[PathBuf]) -> Result<Dataset> {
    load("cifar100", paths, CIFAR100_RECORD_LEN, 1, 100)
}
