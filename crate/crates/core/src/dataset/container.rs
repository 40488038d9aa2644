//! `PAUG1` container.
//!
//! ```text
//! PAUG1\n
//! key=value\n          (name, count, height, width, channels, classes,
//! ...                   generator and its parameters)
//! end\n
//! payload              per example: H*W*C f32 LE pixels, then K f64 LE label entries
//! digest               32-byte SHA-256 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::Dataset;
use crate::augment::{AugmentConfig, PatchMode};
use crate::error::{Error, Result};
use crate::types::{Image, LabeledExample, SoftLabel};

pub const CONTAINER_MAGIC: &str = "PAUG1";
const DIGEST_LEN: usize = 32;

/// What produced the examples in a container.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    None,
    Patch(AugmentConfig),
    Mixup { alpha: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub dataset: Dataset,
    pub generator: Generator,
}

fn header(data: &AugmentedDataset) -> Result<String> {
    let d = &data.dataset;
    let (h, w, c) = d.dims().unwrap_or((0, 0, 0));
    let mut lines = vec![
        CONTAINER_MAGIC.to_string(),
        format!("name={}", d.name().replace(['\n', '\r'], " ")),
        format!("count={}", d.len()),
        format!("height={h}"),
        format!("width={w}"),
        format!("channels={c}"),
        format!("classes={}", d.num_classes()),
    ];
    match data.generator {
        Generator::None => lines.push("generator=none".into()),
        Generator::Patch(cfg) => {
            lines.push("generator=patch".into());
            lines.push(format!("probability={}", cfg.probability));
            match cfg.mode {
                PatchMode::RandomFraction { min_frac, max_frac } => {
                    lines.push("mode=random".into());
                    lines.push(format!("min_frac={min_frac}"));
                    lines.push(format!("max_frac={max_frac}"));
                }
                PatchMode::FixedAreaFraction { area_frac } => {
                    lines.push("mode=fixed".into());
                    lines.push(format!("area_frac={area_frac}"));
                }
            }
            lines.push(format!("seed={}", cfg.seed));
        }
        Generator::Mixup { alpha, seed } => {
            lines.push("generator=mixup".into());
            lines.push(format!("alpha={alpha}"));
            lines.push(format!("seed={seed}"));
        }
    }
    lines.push("end".into());
    let mut s = lines.join("\n");
    s.push('\n');
    Ok(s)
}

pub fn write_augmented(data: &AugmentedDataset, path: &Path) -> Result<()> {
    let mut buf = header(data)?.into_bytes();
    for ex in data.dataset.examples() {
        for v in ex.image.pixels() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for p in ex.label.probs() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    fs::write(path, buf)?;
    Ok(())
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn raw(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Malformed(format!("missing header field {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| Error::Malformed(format!("bad value {raw:?} for {key:?}")))
    }
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Malformed("unterminated header".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::Malformed("header is not UTF-8".into()))
}

pub fn read_augmented(path: &Path) -> Result<AugmentedDataset> {
    let bytes = fs::read(path)?;
    let magic_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .unwrap_or(bytes.len());
    let magic = String::from_utf8_lossy(&bytes[..magic_end.min(16)]).into_owned();
    if magic != CONTAINER_MAGIC {
        return Err(Error::FormatVersionMismatch {
            expected: CONTAINER_MAGIC.into(),
            found: magic,
        });
    }
    if bytes.len() < DIGEST_LEN {
        return Err(Error::Malformed("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::ChecksumMismatch);
    }

    let mut pos = magic_end + 1;
    let mut map = BTreeMap::new();
    loop {
        let line = take_line(body, &mut pos)?;
        if line == "end" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("header line {line:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let f = Fields(map);
    let count: usize = f.parse("count")?;
    let (h, w, c): (usize, usize, usize) =
        (f.parse("height")?, f.parse("width")?, f.parse("channels")?);
    let classes: usize = f.parse("classes")?;

    let generator = match f.raw("generator")? {
        "none" => Generator::None,
        "patch" => {
            let mode = match f.raw("mode")? {
                "random" => PatchMode::RandomFraction {
                    min_frac: f.parse("min_frac")?,
                    max_frac: f.parse("max_frac")?,
                },
                "fixed" => PatchMode::FixedAreaFraction {
                    area_frac: f.parse("area_frac")?,
                },
                other => return Err(Error::Malformed(format!("unknown patch mode {other:?}"))),
            };
            Generator::Patch(AugmentConfig {
                probability: f.parse("probability")?,
                mode,
                seed: f.parse("seed")?,
            })
        }
        "mixup" => Generator::Mixup {
            alpha: f.parse("alpha")?,
            seed: f.parse("seed")?,
        },
        other => return Err(Error::Malformed(format!("unknown generator {other:?}"))),
    };

    let npix = h * w * c;
    let record = npix * 4 + classes * 8;
    let payload = &body[pos..];
    if payload.len() != count * record {
        return Err(Error::Malformed(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            count * record
        )));
    }
    let mut examples = Vec::with_capacity(count);
    for rec in payload.chunks_exact(record.max(1)).take(count) {
        let (px, lb) = rec.split_at(npix * 4);
        let pixels = px
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let probs = lb
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        examples.push(LabeledExample::new(
            Image::new(h, w, c, pixels)?,
            SoftLabel::new(probs)?,
        ));
    }
    Ok(AugmentedDataset {
        dataset: Dataset::new(f.raw("name")?, classes, examples)?,
        generator,
    })
}
