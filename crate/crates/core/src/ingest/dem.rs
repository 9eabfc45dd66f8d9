use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::points::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::geogrid::GridSpec;

/// ESRI ASCII grid. Row 0 is the northern row.
#[derive(Clone, Debug, PartialEq)]
pub struct DemGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
    pub elevations: Vec<f64>,
}

impl DemGrid {
    pub fn validate(&self) -> Result<()> {
        if self.elevations.len() != self.ncols * self.nrows {
            return Err(Error::Format(format!(
                "{} elevations for a {}x{} grid",
                self.elevations.len(),
                self.ncols,
                self.nrows
            )));
        }
        if !(self.cellsize > 0.0) {
            return Err(Error::Format(format!("cellsize must be > 0, got {}", self.cellsize)));
        }
        Ok(())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata_value || v.is_nan()
    }

    /// The grid this DEM occupies, north-up with the top-left origin.
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.xllcorner,
            self.yllcorner + self.nrows as f64 * self.cellsize,
            self.cellsize,
            self.ncols,
            self.nrows,
        )
    }
}

const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

pub fn read_dem_asc(path: impl AsRef<Path>) -> Result<DemGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_asc(&text)
}

pub(crate) fn parse_asc(text: &str) -> Result<DemGrid> {
    let mut header: HashMap<&'static str, f64> = HashMap::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(i, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        let lower = key.to_ascii_lowercase();
        let Some(&canon) = KEYS.iter().find(|k| **k == lower) else {
            break;
        };
        let value = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("line {}: bad value for '{key}'", i + 1)))?;
        header.insert(canon, value);
        lines.next();
    }
    let get = |k: &str| {
        header
            .get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing header key '{k}'")))
    };
    let ncols = get("ncols")?;
    let nrows = get("nrows")?;
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(Error::Format(format!("invalid dimensions {ncols}x{nrows}")));
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);
    let dem_header = (get("xllcorner")?, get("yllcorner")?, get("cellsize")?, get("nodata_value")?);

    let mut elevations = Vec::with_capacity(ncols * nrows);
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == nrows {
            return Err(Error::Format(format!("line {}: more than {nrows} data rows", i + 1)));
        }
        let before = elevations.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: invalid elevation '{tok}'", i + 1)))?;
            elevations.push(v);
        }
        let got = elevations.len() - before;
        if got != ncols {
            return Err(Error::Format(format!("line {}: expected {ncols} values, found {got}", i + 1)));
        }
        rows += 1;
    }
    if rows != nrows {
        return Err(Error::Format(format!("expected {nrows} data rows, found {rows}")));
    }
    let (xllcorner, yllcorner, cellsize, nodata_value) = dem_header;
    let dem = DemGrid {
        ncols,
        nrows,
        xllcorner,
        yllcorner,
        cellsize,
        nodata_value,
        elevations,
    };
    dem.validate()?;
    Ok(dem)
}

pub fn write_dem_asc(path: impl AsRef<Path>, dem: &DemGrid) -> Result<()> {
    dem.validate()?;
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", dem.ncols);
    let _ = writeln!(out, "nrows {}", dem.nrows);
    let _ = writeln!(out, "xllcorner {}", dem.xllcorner);
    let _ = writeln!(out, "yllcorner {}", dem.yllcorner);
    let _ = writeln!(out, "cellsize {}", dem.cellsize);
    let _ = writeln!(out, "NODATA_value {}", dem.nodata_value);
    for row in dem.elevations.chunks(dem.ncols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One point per valid DEM cell at its center, `z` = elevation.
pub fn dem_to_points(dem: &DemGrid) -> Result<PointCloud> {
    dem.validate()?;
    let mut points = Vec::with_capacity(dem.elevations.len());
    for r in 0..dem.nrows {
        let y = dem.yllcorner + (dem.nrows - r) as f64 * dem.cellsize - 0.5 * dem.cellsize;
        for c in 0..dem.ncols {
            let z = dem.elevations[r * dem.ncols + c];
            if dem.is_nodata(z) {
                continue;
            }
            let x = dem.xllcorner + (c as f64 + 0.5) * dem.cellsize;
            points.push(Point::new(x, y, z, 0.0));
        }
    }
    PointCloud::new(points)
}
