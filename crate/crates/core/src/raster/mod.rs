//! Point-cloud binning, the four feature maps, hole filling and stack
//! assembly.

mod fill;
mod preview;
mod slope;
mod stack;

use crate::error::Result;
use crate::geogrid::{GeoPoint, GridSpec, Raster};
use crate::ingest::{ClassRaster, PointCloud, CLASS_NODATA};

pub use fill::fill_holes;
pub use preview::{raster_to_gray, write_preview};
pub use slope::slope_map;
pub use stack::{build_feature_stack, rasterize_cloud, RasterizeOptions, RasterizedTile};

/// Per-cell point aggregates.
#[derive(Clone, Debug)]
pub struct CellBins {
    pub spec: GridSpec,
    pub count: Vec<u32>,
    pub sum_z: Vec<f64>,
    pub sum_intensity: Vec<f64>,
    /// Highest class seen per cell, [`CLASS_NODATA`] when none.
    pub max_class: Vec<u8>,
    /// Points that fell outside the grid and were not accumulated.
    pub out_of_bounds: usize,
}

impl CellBins {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        CellBins {
            spec,
            count: vec![0; n],
            sum_z: vec![0.0; n],
            sum_intensity: vec![0.0; n],
            max_class: vec![CLASS_NODATA; n],
            out_of_bounds: 0,
        }
    }
}

/// Accumulates each in-bounds point into its cell. A point's own class wins
/// over the mask class at its cell.
pub fn bin_points(pc: &PointCloud, spec: &GridSpec, mask: Option<&ClassRaster>) -> Result<CellBins> {
    if let Some(m) = mask {
        spec.ensure_same(&m.spec, "class mask")?;
    }
    let mut bins = CellBins::empty(spec.clone());
    for p in &pc.points {
        let Ok(cell) = spec.geo_to_cell(GeoPoint::new(p.x, p.y)) else {
            bins.out_of_bounds += 1;
            continue;
        };
        let i = spec.index(cell);
        bins.count[i] += 1;
        bins.sum_z[i] += p.z;
        bins.sum_intensity[i] += p.intensity;
        let class = p
            .class_id
            .or_else(|| mask.map(|m| m.values[i]).filter(|&c| c != CLASS_NODATA));
        if let Some(c) = class {
            let slot = &mut bins.max_class[i];
            if *slot == CLASS_NODATA || c > *slot {
                *slot = c;
            }
        }
    }
    if bins.out_of_bounds > 0 {
        log::debug!("{} of {} points outside the grid", bins.out_of_bounds, pc.len());
    }
    Ok(bins)
}

fn mean_map(bins: &CellBins, sums: &[f64], name: &str) -> Raster {
    let values = bins
        .count
        .iter()
        .zip(sums)
        .map(|(&n, &s)| if n == 0 { f32::NAN } else { (s / f64::from(n)) as f32 })
        .collect();
    Raster::new(bins.spec.clone(), name, values).expect("bins sized to spec")
}

/// Mean point elevation per cell; NaN where no points fell.
pub fn height_map(bins: &CellBins) -> Raster {
    mean_map(bins, &bins.sum_z, "height")
}

/// Mean return intensity per cell; NaN where no points fell.
pub fn intensity_map(bins: &CellBins) -> Raster {
    mean_map(bins, &bins.sum_intensity, "intensity")
}

/// Highest class index per cell.
pub fn semantic_map(bins: &CellBins) -> ClassRaster {
    ClassRaster {
        spec: bins.spec.clone(),
        values: bins.max_class.clone(),
    }
}

/// Replaces semantic nodata cells with the class of a co-registered mask.
pub fn fill_semantic_from_mask(sem: &ClassRaster, mask: &ClassRaster) -> Result<ClassRaster> {
    sem.spec.ensure_same(&mask.spec, "class mask")?;
    let values = sem
        .values
        .iter()
        .zip(&mask.values)
        .map(|(&s, &m)| if s == CLASS_NODATA { m } else { s })
        .collect();
    Ok(ClassRaster {
        spec: sem.spec.clone(),
        values,
    })
}
