//! TBCK v1 checkpoints.
//!
//! Layout, little-endian: `TBCK` | u16 version | u32 config length | config
//! JSON | u32 tensor count | per tensor: u16 name length, UTF-8 name, u8 rank,
//! u32 dims, f32 data.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::autodiff::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::util::ByteReader;

pub const TBCK_MAGIC: &[u8; 4] = b"TBCK";
pub const TBCK_VERSION: u16 = 1;

pub fn encode_checkpoint(m: &Model<f32>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(&m.config).map_err(|e| Error::Format(format!("config: {e}")))?;
    let mut buf = Vec::with_capacity(16 + config.len() + m.num_parameters() * 4 + m.params.len() * 40);
    buf.extend_from_slice(TBCK_MAGIC);
    buf.extend_from_slice(&TBCK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    buf.extend_from_slice(&(m.params.len() as u32).to_le_bytes());
    for (name, t) in &m.params {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape.len() as u8);
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

/// Decodes a checkpoint and checks its tensors against its own config.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model<f32>> {
    let mut rd = ByteReader::new(bytes, "TBCK");
    if rd.take(4)? != TBCK_MAGIC {
        return Err(Error::Format("bad TBCK magic".into()));
    }
    let version = rd.u16()?;
    if version != TBCK_VERSION {
        return Err(Error::Format(format!("unsupported TBCK version {version}")));
    }
    let clen = rd.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(rd.take(clen)?).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    config.validate()?;
    let count = rd.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = rd.u16()? as usize;
        let name = std::str::from_utf8(rd.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = rd.u8()? as usize;
        if rank != 4 {
            return Err(Error::Format(format!("tensor '{name}' has rank {rank}, expected 4")));
        }
        let mut shape: Shape = [0; 4];
        for d in &mut shape {
            *d = rd.u32()? as usize;
        }
        let n: usize = shape.iter().product();
        if rd.remaining() < n * 4 {
            return Err(Error::Format(format!("tensor '{name}' truncated")));
        }
        let data = (0..n).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        params.push((name, Tensor { shape, data }));
    }
    if rd.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after last tensor", rd.remaining())));
    }
    check_params(&config, &params)?;
    Ok(Model { config, params })
}

/// Shape error naming the first tensor that disagrees with `config`.
fn check_params(config: &ModelConfig, params: &[(String, Tensor<f32>)]) -> Result<()> {
    let expected = config.param_shapes();
    for (i, (name, shape)) in expected.iter().enumerate() {
        match params.get(i) {
            None => return Err(Error::Shape(format!("missing tensor '{name}'"))),
            Some((n, t)) if n != name || t.shape != *shape => {
                return Err(Error::Shape(format!(
                    "tensor '{n}' {:?} does not match expected '{name}' {shape:?}",
                    t.shape
                )))
            }
            _ => {}
        }
    }
    if let Some((n, _)) = params.get(expected.len()) {
        return Err(Error::Shape(format!("unexpected tensor '{n}'")));
    }
    if let Some((n, _)) = params.iter().find(|(_, t)| !t.is_finite()) {
        return Err(Error::Range(format!("tensor '{n}' has non-finite values")));
    }
    Ok(())
}

pub fn save_checkpoint(m: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a checkpoint that must match `config` tensor for tensor.
pub fn load_checkpoint_for(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Model<f32>> {
    let m = load_checkpoint(path)?;
    check_params(config, &m.params)?;
    Ok(m)
}
