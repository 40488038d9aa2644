use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rectangle ({x}, {y}, {w}x{h}) exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("channel mismatch: {expected} vs {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid area: patch {patch_area} within image {image_area}")]
    InvalidArea { patch_area: u64, image_area: u64 },
    #[error("label length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{path}: truncated record ({len} bytes is not a multiple of {record})")]
    TruncatedRecord {
        path: PathBuf,
        len: usize,
        record: usize,
    },
    #[error("label {label} out of range (max {max})")]
    LabelOutOfRange { label: u8, max: u8 },
    #[error("format version mismatch: expected {expected:?}, found {found:?}")]
    FormatVersionMismatch { expected: String, found: String },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("checkpoint does not match data: {0}")]
    CheckpointMismatch(String),
    #[error("malformed metrics: {0}")]
    MalformedMetrics(String),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
