//! Checkpoint layout: a `key=value` text header ending in `end\n`, then for
//! each layer its weights and then its biases as little-endian `f64`.

use std::fs;
use std::path::Path;

use super::{Architecture, Dense, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "PAUGMODEL1";

/// Weights plus what they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// `(height, width, channels)` of the training images.
    pub image_dims: (usize, usize, usize),
    pub seed: u64,
}

impl Checkpoint {
    /// Fails unless images of `dims` with `classes` labels fit this model.
    pub fn check_compatible(&self, dims: (usize, usize, usize), classes: usize) -> Result<()> {
        if dims != self.image_dims {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint trained on {:?} images, data is {dims:?}",
                self.image_dims
            )));
        }
        if classes != self.params.output_dim {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint predicts {} classes, data has {classes}",
                self.params.output_dim
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let p = &ckpt.params;
    let (h, w, c) = ckpt.image_dims;
    let hidden = match p.architecture {
        Architecture::Linear => 0,
        Architecture::Mlp { hidden } => hidden,
    };
    let arch = match p.architecture {
        Architecture::Linear => "linear",
        Architecture::Mlp { .. } => "mlp",
    };
    let header = format!(
        "{CHECKPOINT_MAGIC}\narchitecture={arch}\nhidden={hidden}\ninput_dim={}\noutput_dim={}\n\
         height={h}\nwidth={w}\nchannels={c}\nseed={}\nend\n",
        p.input_dim, p.output_dim, ckpt.seed
    );
    let mut buf = header.into_bytes();
    for layer in &p.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Malformed("unterminated checkpoint header".into()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::Malformed("checkpoint header is not UTF-8".into()))?
            .to_string();
        pos += end + 1;
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    match lines.first() {
        Some(m) if m == CHECKPOINT_MAGIC => {}
        other => {
            return Err(Error::FormatVersionMismatch {
                expected: CHECKPOINT_MAGIC.into(),
                found: other.cloned().unwrap_or_default(),
            })
        }
    }
    let get = |key: &str| -> Result<&str> {
        lines[1..]
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::Malformed(format!("checkpoint missing {key:?}")))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Malformed(format!("checkpoint field {key:?} is not a number")))
    };
    let architecture = match get("architecture")? {
        "linear" => Architecture::Linear,
        "mlp" => Architecture::Mlp {
            hidden: num("hidden")?,
        },
        other => return Err(Error::Malformed(format!("unknown architecture {other:?}"))),
    };
    let input_dim = num("input_dim")?;
    let output_dim = num("output_dim")?;
    let image_dims = (num("height")?, num("width")?, num("channels")?);
    if image_dims.0 * image_dims.1 * image_dims.2 != input_dim {
        return Err(Error::Malformed(
            "image dims disagree with input_dim".into(),
        ));
    }
    let seed = get("seed")?
        .parse()
        .map_err(|_| Error::Malformed("checkpoint seed".into()))?;

    let mut params = ModelParams::zeros(architecture, input_dim, output_dim);
    let payload = &bytes[pos..];
    if payload.len() != params.num_params() * 8 {
        return Err(Error::Malformed(format!(
            "checkpoint payload is {} bytes, expected {}",
            payload.len(),
            params.num_params() * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    for layer in &mut params.layers {
        let Dense { weights, bias, .. } = layer;
        for v in weights.iter_mut().chain(bias.iter_mut()) {
            *v = values.next().expect("length checked");
        }
    }
    Ok(Checkpoint {
        params,
        image_dims,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_both_architectures() {
        let dir = tempfile::tempdir().unwrap();
        for arch in [Architecture::Linear, Architecture::Mlp { hidden: 5 }] {
            let mut params = ModelParams::init(arch, 12, 3, 4);
            for i in 0..params.num_params() {
                params.set_param(i, params.param(i) + i as f64 * 1e-3);
            }
            let ckpt = Checkpoint {
                params,
                image_dims: (2, 2, 3),
                seed: 4,
            };
            let p = dir.path().join("m.ckpt");
            save_checkpoint(&ckpt, &p).unwrap();
            assert_eq!(load_checkpoint(&p).unwrap(), ckpt);
        }
    }

    #[test]
    fn compatibility() {
        let ckpt = Checkpoint {
            params: ModelParams::zeros(Architecture::Linear, 12, 2),
            image_dims: (2, 2, 3),
            seed: 0,
        };
        assert!(ckpt.check_compatible((2, 2, 3), 2).is_ok());
        assert!(matches!(
            ckpt.check_compatible((2, 3, 2), 2),
            Err(Error::CheckpointMismatch(_))
        ));
        assert!(matches!(
            ckpt.check_compatible((2, 2, 3), 10),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let ckpt = Checkpoint {
            params: ModelParams::zeros(Architecture::Linear, 4, 2),
            image_dims: (2, 2, 1),
            seed: 0,
        };
        save_checkpoint(&ckpt, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Malformed(_))));
    }
}
