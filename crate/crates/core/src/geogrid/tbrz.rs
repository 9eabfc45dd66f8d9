//! TBRZ v1 multi-channel raster container.
//!
//! Layout, all integers little-endian:
//! `TBRZ` | u16 version | u16 channel_count | u32 width | u32 height |
//! f64 origin_x | f64 origin_y | f64 cell_size | per channel: u16 name length,
//! UTF-8 name | then width*height f32 per channel, row-major, channels
//! concatenated.

use std::fs;
use std::path::Path;

use super::{GridSpec, Raster};
use crate::error::{Error, Result};
use crate::util::ByteReader;

pub const TBRZ_MAGIC: &[u8; 4] = b"TBRZ";
pub const TBRZ_VERSION: u16 = 1;

pub(crate) fn encode(rasters: &[Raster]) -> Result<Vec<u8>> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::Format("cannot write an empty raster list".into()))?;
    let spec = &first.spec;
    for r in rasters {
        spec.ensure_same(&r.spec, &r.channel_name)?;
        if r.values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "channel '{}' has {} values, expected {}",
                r.channel_name,
                r.values.len(),
                spec.len()
            )));
        }
    }
    let count = u16::try_from(rasters.len()).map_err(|_| Error::Format("too many channels".into()))?;
    let mut buf = Vec::with_capacity(40 + rasters.len() * (spec.len() * 4 + 16));
    buf.extend_from_slice(TBRZ_MAGIC);
    buf.extend_from_slice(&TBRZ_VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&(spec.width as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.height as u32).to_le_bytes());
    buf.extend_from_slice(&spec.origin_x.to_le_bytes());
    buf.extend_from_slice(&spec.origin_y.to_le_bytes());
    buf.extend_from_slice(&spec.cell_size.to_le_bytes());
    for r in rasters {
        let name = r.channel_name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format("channel name too long".into()))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name);
    }
    for r in rasters {
        for v in &r.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Vec<Raster>> {
    let mut rd = ByteReader::new(bytes, "TBRZ");
    if rd.take(4)? != TBRZ_MAGIC {
        return Err(Error::Format("bad TBRZ magic".into()));
    }
    let version = rd.u16()?;
    if version != TBRZ_VERSION {
        return Err(Error::Format(format!("unsupported TBRZ version {version}")));
    }
    let count = rd.u16()? as usize;
    let width = rd.u32()? as usize;
    let height = rd.u32()? as usize;
    let origin_x = rd.f64()?;
    let origin_y = rd.f64()?;
    let cell_size = rd.f64()?;
    let spec = GridSpec::new(origin_x, origin_y, cell_size, width, height)
        .map_err(|e| Error::Format(format!("bad TBRZ geometry: {e}")))?;
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rd.u16()? as usize;
        let name = std::str::from_utf8(rd.take(len)?)
            .map_err(|_| Error::Format("channel name is not UTF-8".into()))?;
        names.push(name.to_owned());
    }
    let n = spec.len();
    let expected = n
        .checked_mul(4 * count)
        .ok_or_else(|| Error::Format("TBRZ dimensions overflow".into()))?;
    if rd.remaining() != expected {
        return Err(Error::Format(format!(
            "TBRZ payload is {} bytes, expected {expected}",
            rd.remaining()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for name in names {
        let values = (0..n).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
        out.push(Raster {
            spec: spec.clone(),
            channel_name: name,
            values,
            nodata: f32::NAN,
        });
    }
    Ok(out)
}

pub fn write_raster(path: impl AsRef<Path>, rasters: &[Raster]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(rasters)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Vec<Raster>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
