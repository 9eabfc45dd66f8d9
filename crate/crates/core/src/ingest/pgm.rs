use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, GridSpec};

pub const CLASS_NODATA: u8 = 255;

/// Terrain superclasses in ascending order of risk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum TerrainClass {
    Traversable = 0,
    NonTraversable = 1,
    Vegetation = 2,
    Obstacle = 3,
    Water = 4,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 5] = [
        TerrainClass::Traversable,
        TerrainClass::NonTraversable,
        TerrainClass::Vegetation,
        TerrainClass::Obstacle,
        TerrainClass::Water,
    ];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

/// Per-cell class index (0..=4) or [`CLASS_NODATA`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRaster {
    pub spec: GridSpec,
    pub values: Vec<u8>,
}

impl ClassRaster {
    pub fn new(spec: GridSpec, values: Vec<u8>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!("{} classes for {} cells", values.len(), spec.len())));
        }
        if let Some(i) = values.iter().position(|&v| v > 4 && v != CLASS_NODATA) {
            return Err(Error::Range(format!(
                "class {} at cell {} not in {{0..4, 255}}",
                values[i],
                spec.cell_at(i)
            )));
        }
        Ok(ClassRaster { spec, values })
    }

    pub fn filled(spec: GridSpec, class: u8) -> Result<Self> {
        let n = spec.len();
        ClassRaster::new(spec, vec![class; n])
    }

    pub fn get(&self, c: CellIndex) -> u8 {
        self.values[self.spec.index(c)]
    }
}

/// Raw 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Gray8> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub(crate) fn decode_pgm(bytes: &[u8]) -> Result<Gray8> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (expected P5 magic)".into()));
    }
    let num = |t: String, what: &str| -> Result<usize> {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("invalid PGM {what} '{t}'")))
    };
    let width = num(token()?, "width")?;
    let height = num(token()?, "height")?;
    let maxval = num(token()?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval must be 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes
        .get(pos + 1..)
        .ok_or_else(|| Error::Format("PGM has no pixel data".into()))?;
    if data.len() != width * height {
        return Err(Error::Format(format!(
            "PGM pixel data is {} bytes, expected {}",
            data.len(),
            width * height
        )));
    }
    Ok(Gray8 {
        width,
        height,
        pixels: data.to_vec(),
    })
}

pub(crate) fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for {width}x{height}", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(width, height, pixels)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a class mask that must match `spec` exactly.
pub fn read_semantic_mask(path: impl AsRef<Path>, spec: &GridSpec) -> Result<ClassRaster> {
    let img = read_pgm(path)?;
    if img.width != spec.width || img.height != spec.height {
        return Err(Error::Format(format!(
            "mask is {}x{}, grid is {}x{}",
            img.width, img.height, spec.width, spec.height
        )));
    }
    ClassRaster::new(spec.clone(), img.pixels)
}

pub fn write_semantic_mask(path: impl AsRef<Path>, mask: &ClassRaster) -> Result<()> {
    write_pgm(path, mask.spec.width, mask.spec.height, &mask.values)
}
