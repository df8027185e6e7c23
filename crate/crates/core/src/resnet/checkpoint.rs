//! Binary checkpoint format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "RACP"                      4 bytes
//! version                     u32 = 1
//! input_dim, width, blocks,
//! classes                     u64 each
//! skip                        u64 (0 | 1)
//! activation                  u64 (0 = post, 1 = pre)
//! stochastic_depth_p          f64
//! weight_decay                f64
//! branch_init_gain            f64
//! seed                        u64
//! parameters                  f64, row-major, in ModelParams::tensors() order
//! ```

use std::fs;
use std::path::Path;

use super::model::{ActivationStyle, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RACP";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams, cfg: &ModelConfig) -> Result<Vec<u8>> {
    if !params.matches(cfg) {
        return Err(Error::invalid("parameters do not match the model configuration"));
    }
    let mut out = Vec::with_capacity(76 + 8 * params.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        cfg.input_dim as u64,
        cfg.width as u64,
        cfg.blocks as u64,
        cfg.classes as u64,
        u64::from(cfg.skip),
        cfg.activation.code(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.stochastic_depth_p.to_le_bytes());
    out.extend_from_slice(&cfg.weight_decay.to_le_bytes());
    out.extend_from_slice(&cfg.branch_init_gain.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, ModelConfig)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"RACP\"")));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let input_dim = r.count()?;
    let width = r.count()?;
    let blocks = r.count()?;
    let classes = r.count()?;
    let skip_at = r.pos;
    let skip = match r.u64()? {
        0 => false,
        1 => true,
        other => return Err(Error::format(skip_at, format!("skip flag {other} is not 0 or 1"))),
    };
    let act_at = r.pos;
    let activation = ActivationStyle::from_code(r.u64()?)
        .ok_or_else(|| Error::format(act_at, "unknown activation style code"))?;
    let stochastic_depth_p = r.f64()?;
    let weight_decay = r.f64()?;
    let branch_init_gain = r.f64()?;
    let seed = r.u64()?;
    let cfg = ModelConfig {
        input_dim,
        width,
        blocks,
        classes,
        skip,
        activation,
        stochastic_depth_p,
        weight_decay,
        branch_init_gain,
        seed,
    };
    cfg.validate()
        .map_err(|e| Error::format(8, format!("invalid model configuration: {e}")))?;

    let mut params = ModelParams::zeros(&cfg);
    let expected = params.parameter_count();
    let remaining = bytes.len() - r.pos;
    if remaining < expected * 8 {
        return Err(Error::format(
            bytes.len(),
            format!("truncated parameters: need {} bytes, found {remaining}", expected * 8),
        ));
    }
    if remaining > expected * 8 {
        return Err(Error::format(r.pos + expected * 8, "trailing bytes after parameters"));
    }
    let mut failure = None;
    params.for_each_tensor_mut(|t| {
        for v in t.iter_mut() {
            let at = r.pos;
            let x = r.f64().expect("length checked");
            if !x.is_finite() && failure.is_none() {
                failure = Some(at);
            }
            *v = x;
        }
    });
    if let Some(at) = failure {
        return Err(Error::format(at, "non-finite parameter"));
    }
    Ok((params, cfg))
}

pub fn save_checkpoint(params: &ModelParams, cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(params, cfg)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, ModelConfig)> {
    decode_checkpoint(&fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len(),
                format!("truncated header: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn count(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|v| *v <= 1 << 24)
            .ok_or_else(|| Error::format(at, format!("implausible dimension {v}")))
    }
}
