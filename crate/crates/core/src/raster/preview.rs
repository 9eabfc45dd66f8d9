use std::path::Path;

use crate::error::Result;
use crate::geogrid::Raster;
use crate::ingest::{write_pgm, Gray8};

/// Affinely maps the valid range onto 1..=255; nodata becomes 0. A constant
/// raster maps to 128.
pub fn raster_to_gray(r: &Raster) -> Gray8 {
    let range = r.valid_range();
    let pixels = r
        .values
        .iter()
        .map(|&v| match range {
            _ if r.is_nodata(v) || !v.is_finite() => 0,
            Some((lo, hi)) if hi > lo => (1.0 + 254.0 * (v - lo) / (hi - lo)).round().clamp(1.0, 255.0) as u8,
            _ => 128,
        })
        .collect();
    Gray8 {
        width: r.spec.width,
        height: r.spec.height,
        pixels,
    }
}

pub fn write_preview(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    let g = raster_to_gray(r);
    write_pgm(path, g.width, g.height, &g.pixels)
}
