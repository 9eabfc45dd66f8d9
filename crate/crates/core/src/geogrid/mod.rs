//! Georeferenced grid geometry and the raster types shared by every stage of
//! the pipeline.
//!
//! Grids are north-up and row-major. The origin is the top-left corner of the
//! top-left cell, so `y` decreases as the row index grows.

mod path;
mod tbrz;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use path::{is_eight_adjacent, is_eight_connected_chain, rasterize_trajectory, trajectory_cells};
pub use tbrz::{read_raster, write_raster, TBRZ_MAGIC, TBRZ_VERSION};
pub use update::apply_local_update;

/// Lower bound on every traversal cost.
pub const C_MIN: f32 = 0.01;

/// Channel order of a [`FeatureStack`].
pub const FEATURE_CHANNELS: [&str; 4] = ["semantic", "height", "slope", "intensity"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub crs_label: String,
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        let spec = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
            crs_label: String::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit cells with the top-left corner at `(0, height)`.
    pub fn unit(width: usize, height: usize) -> Self {
        GridSpec {
            origin_x: 0.0,
            origin_y: height as f64,
            cell_size: 1.0,
            width,
            height,
            crs_label: String::new(),
        }
    }

    pub fn with_crs_label(mut self, label: impl Into<String>) -> Self {
        self.crs_label = label.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) || !self.cell_size.is_finite() {
            return Err(Error::Config(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "grid must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.width as f64 * self.cell_size
    }

    pub fn min_y(&self) -> f64 {
        self.origin_y - self.height as f64 * self.cell_size
    }

    /// Geometry equality; the CRS label is informational and ignored.
    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
            && self.cell_size == other.cell_size
            && self.width == other.width
            && self.height == other.height
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::SpecMismatch(format!(
                "{what}: {}x{} @ ({}, {}) / {} vs {}x{} @ ({}, {}) / {}",
                self.width,
                self.height,
                self.origin_x,
                self.origin_y,
                self.cell_size,
                other.width,
                other.height,
                other.origin_x,
                other.origin_y,
                other.cell_size
            )))
        }
    }

    pub fn contains_cell(&self, c: CellIndex) -> bool {
        c.row < self.height && c.col < self.width
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.origin_x && x <= self.max_x() && y <= self.origin_y && y >= self.min_y()
    }

    pub fn index(&self, c: CellIndex) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, index: usize) -> CellIndex {
        CellIndex::new(index / self.width, index % self.width)
    }

    pub fn check_cell(&self, c: CellIndex) -> Result<()> {
        if self.contains_cell(c) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "cell ({}, {}) outside {}x{} grid",
                c.row, c.col, self.height, self.width
            )))
        }
    }

    /// Cell containing a planar point. Points on the eastern or southern edge
    /// clamp to the last column/row.
    pub fn geo_to_cell(&self, p: GeoPoint) -> Result<CellIndex> {
        if !p.x.is_finite() || !p.y.is_finite() || !self.contains_point(p.x, p.y) {
            return Err(Error::OutOfBounds(format!(
                "point ({}, {}) outside [{}, {}] x [{}, {}]",
                p.x,
                p.y,
                self.origin_x,
                self.max_x(),
                self.min_y(),
                self.origin_y
            )));
        }
        let row = ((self.origin_y - p.y) / self.cell_size).floor() as usize;
        let col = ((p.x - self.origin_x) / self.cell_size).floor() as usize;
        Ok(CellIndex::new(row.min(self.height - 1), col.min(self.width - 1)))
    }

    /// Center of a cell.
    pub fn cell_to_geo(&self, c: CellIndex) -> Result<GeoPoint> {
        self.check_cell(c)?;
        Ok(GeoPoint::new(
            self.origin_x + (c.col as f64 + 0.5) * self.cell_size,
            self.origin_y - (c.row as f64 + 0.5) * self.cell_size,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        CellIndex { row, col }
    }

    /// Chebyshev distance: number of unit 8-connected steps.
    pub fn chebyshev(self, other: CellIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y, z: None }
    }

    pub const fn with_z(x: f64, y: f64, z: f64) -> Self {
        GeoPoint { x, y, z: Some(z) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.map_or(true, f64::is_finite)
    }
}

/// Ordered planar waypoints, optionally timestamped in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<GeoPoint>,
    pub timestamps: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(points: Vec<GeoPoint>, timestamps: Option<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateTrajectory(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Range(format!("trajectory point {bad} is not finite")));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != points.len() {
                return Err(Error::Format(format!(
                    "{} timestamps for {} points",
                    ts.len(),
                    points.len()
                )));
            }
            if ts.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Range("timestamps must be strictly increasing".into()));
            }
        }
        Ok(Trajectory { points, timestamps })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A single named channel of 32-bit values over a grid.
#[derive(Clone, Debug)]
pub struct Raster {
    pub spec: GridSpec,
    pub channel_name: String,
    pub values: Vec<f32>,
    pub nodata: f32,
}

/// Bitwise on floats, so NaN nodata compares equal to itself.
impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.channel_name == other.channel_name
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Raster {
    pub fn new(spec: GridSpec, channel_name: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "raster has {} values for a {}x{} grid",
                values.len(),
                spec.width,
                spec.height
            )));
        }
        Ok(Raster {
            spec,
            channel_name: channel_name.into(),
            values,
            nodata: f32::NAN,
        })
    }

    pub fn filled(spec: GridSpec, channel_name: impl Into<String>, value: f32) -> Self {
        let n = spec.len();
        Raster {
            spec,
            channel_name: channel_name.into(),
            values: vec![value; n],
            nodata: f32::NAN,
        }
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        if self.nodata.is_nan() {
            v.is_nan()
        } else {
            v == self.nodata
        }
    }

    pub fn get(&self, c: CellIndex) -> f32 {
        self.values[self.spec.index(c)]
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|&&v| self.is_nodata(v)).count()
    }

    /// Finite min and max over valid cells, or `None` if every cell is nodata.
    pub fn valid_range(&self) -> Option<(f32, f32)> {
        self.values
            .iter()
            .filter(|&&v| !self.is_nodata(v) && v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// The four normalized model input channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub spec: GridSpec,
    pub channels: [Raster; 4],
}

impl FeatureStack {
    /// Validates names, geometry, and the `[0, 1]` no-nodata range.
    pub fn new(spec: GridSpec, channels: [Raster; 4]) -> Result<Self> {
        for (ch, name) in channels.iter().zip(FEATURE_CHANNELS) {
            if ch.channel_name != name {
                return Err(Error::Format(format!(
                    "expected channel '{name}', found '{}'",
                    ch.channel_name
                )));
            }
            spec.ensure_same(&ch.spec, name)?;
            if let Some(i) = ch.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Range(format!(
                    "channel '{name}' cell {i} = {} not in [0, 1]",
                    ch.values[i]
                )));
            }
        }
        Ok(FeatureStack { spec, channels })
    }

    pub fn from_rasters(rasters: Vec<Raster>) -> Result<Self> {
        let [a, b, c, d]: [Raster; 4] = rasters
            .try_into()
            .map_err(|v: Vec<Raster>| Error::Format(format!("feature stack needs 4 channels, got {}", v.len())))?;
        let spec = a.spec.clone();
        FeatureStack::new(spec, [a, b, c, d])
    }

    pub fn channel(&self, name: &str) -> Option<&Raster> {
        self.channels.iter().find(|c| c.channel_name == name)
    }

    /// Channel-major `(4, height, width)` copy of the values.
    pub fn to_chw(&self) -> Vec<f32> {
        self.channels.iter().flat_map(|c| c.values.iter().copied()).collect()
    }
}

/// Per-cell traversal cost in `[C_MIN, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMap {
    pub spec: GridSpec,
    pub values: Vec<f32>,
}

impl CostMap {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "costmap has {} values for {} cells",
                values.len(),
                spec.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(C_MIN..=1.0).contains(v)) {
            return Err(Error::Range(format!(
                "cost {} at cell {} outside [{C_MIN}, 1]",
                values[i],
                spec.cell_at(i)
            )));
        }
        Ok(CostMap { spec, values })
    }

    pub fn uniform(spec: GridSpec, cost: f32) -> Result<Self> {
        let n = spec.len();
        CostMap::new(spec, vec![cost; n])
    }

    /// Clamps into `[C_MIN, 1]`; NaN becomes 1.
    pub fn from_values_clamped(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { 1.0 } else { v.clamp(C_MIN, 1.0) })
            .collect();
        CostMap::new(spec, values)
    }

    pub fn from_raster(r: &Raster) -> Result<Self> {
        CostMap::new(r.spec.clone(), r.values.clone())
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            spec: self.spec.clone(),
            channel_name: "cost".into(),
            values: self.values.clone(),
            nodata: f32::NAN,
        }
    }

    pub fn get(&self, c: CellIndex) -> f32 {
        self.values[self.spec.index(c)]
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }
}

/// Binary path mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMap {
    pub spec: GridSpec,
    pub values: Vec<u8>,
}

impl PathMap {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        PathMap {
            spec,
            values: vec![0; n],
        }
    }

    pub fn from_cells(spec: GridSpec, cells: &[CellIndex]) -> Result<Self> {
        let mut map = PathMap::empty(spec);
        for &c in cells {
            map.spec.check_cell(c)?;
            let i = map.spec.index(c);
            map.values[i] = 1;
        }
        Ok(map)
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_set(&self, c: CellIndex) -> bool {
        self.values[self.spec.index(c)] != 0
    }

    pub fn set_cells(&self) -> Vec<CellIndex> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| self.spec.cell_at(i))
            .collect()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| f32::from(v)).collect()
    }
}
