use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::ByteReader;

pub const TBPT_MAGIC: &[u8; 4] = b"TBPT";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub class_id: Option<u8>,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point {
            x,
            y,
            z,
            intensity,
            class_id: None,
        }
    }

    pub fn with_class(mut self, class_id: u8) -> Self {
        self.class_id = Some(class_id);
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if self.intensity < 0.0 {
            return Err(format!("negative intensity {}", self.intensity));
        }
        if let Some(c) = self.class_id {
            if c > 4 {
                return Err(format!("class {c} not in 0..=4"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            p.validate().map_err(|m| Error::Range(format!("point {i}: {m}")))?;
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn has_class(&self) -> bool {
        self.points.iter().any(|p| p.class_id.is_some())
    }
}

/// Reads either the `TBPT` binary format or the `x,y,z,intensity[,class]` CSV,
/// chosen by the leading magic bytes.
pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(TBPT_MAGIC) {
        decode_bin(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("point CSV is not UTF-8: {e}")))?;
        parse_csv(text)
    }
}

pub(crate) fn parse_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty point file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_class = match cols.as_slice() {
        ["x", "y", "z", "intensity"] => false,
        ["x", "y", "z", "intensity", "class"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header 'x,y,z,intensity[,class]', got '{header}'"),
            })
        }
    };
    let expected = if with_class { 5 } else { 4 };
    let mut points = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            fields[k].parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid number '{}'", fields[k]),
            })
        };
        let mut p = Point::new(num(0)?, num(1)?, num(2)?, num(3)?);
        if with_class {
            let c: i64 = fields[4].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid class '{}'", fields[4]),
            })?;
            if !(0..=4).contains(&c) {
                return Err(Error::Range(format!("line {lineno}: class {c} not in 0..=4")));
            }
            p.class_id = Some(c as u8);
        }
        p.validate().map_err(|m| Error::Range(format!("line {lineno}: {m}")))?;
        points.push(p);
    }
    Ok(PointCloud { points })
}

pub fn write_points_csv(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let with_class = pc.has_class();
    let mut out = String::with_capacity(pc.len() * 48 + 32);
    out.push_str(if with_class { "x,y,z,intensity,class\n" } else { "x,y,z,intensity\n" });
    for p in &pc.points {
        out.push_str(&format!("{},{},{},{}", p.x, p.y, p.z, p.intensity));
        if with_class {
            let c = p
                .class_id
                .ok_or_else(|| Error::Format("mixed classed and unclassed points".into()))?;
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary layout: `TBPT` | u32 count | u8 has_class | per point 4 x f32 LE
/// (x, y, z, intensity) and, when `has_class`, a u8 class.
pub fn write_points_bin(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let with_class = pc.has_class();
    let count = u32::try_from(pc.len()).map_err(|_| Error::Format("too many points".into()))?;
    let mut buf = Vec::with_capacity(9 + pc.len() * 17);
    buf.extend_from_slice(TBPT_MAGIC);
    buf.extend_from_slice(&count.to_le_bytes());
    buf.push(u8::from(with_class));
    for p in &pc.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if with_class {
            buf.push(
                p.class_id
                    .ok_or_else(|| Error::Format("mixed classed and unclassed points".into()))?,
            );
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn decode_bin(bytes: &[u8]) -> Result<PointCloud> {
    let mut rd = ByteReader::new(bytes, "TBPT");
    if rd.take(4)? != TBPT_MAGIC {
        return Err(Error::Format("bad TBPT magic".into()));
    }
    let count = rd.u32()? as usize;
    let with_class = match rd.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("bad has_class flag {v}"))),
    };
    let stride = if with_class { 17 } else { 16 };
    if rd.remaining() != count * stride {
        return Err(Error::Format(format!(
            "TBPT payload is {} bytes, expected {}",
            rd.remaining(),
            count * stride
        )));
    }
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let mut p = Point::new(
            rd.f32()? as f64,
            rd.f32()? as f64,
            rd.f32()? as f64,
            rd.f32()? as f64,
        );
        if with_class {
            p.class_id = Some(rd.u8()?);
        }
        p.validate().map_err(|m| Error::Range(format!("point {i}: {m}")))?;
        points.push(p);
    }
    Ok(PointCloud { points })
}
