use crate::error::Result;
use crate::geogrid::{FeatureStack, GridSpec, Raster, FEATURE_CHANNELS};
use crate::ingest::{ClassRaster, PointCloud, CLASS_NODATA};

use super::{bin_points, fill_holes, fill_semantic_from_mask, height_map, intensity_map, semantic_map, slope_map};

/// Min-max normalization over valid cells; constant tiles map to 0 and
/// nodata maps to 1.
fn min_max(r: &Raster, name: &str) -> Raster {
    let range = r.valid_range();
    if let Some((lo, hi)) = range {
        log::debug!("{name}: tile range [{lo}, {hi}]");
    }
    let values = r
        .values
        .iter()
        .map(|&v| {
            if r.is_nodata(v) || !v.is_finite() {
                return 1.0;
            }
            match range {
                Some((lo, hi)) if hi > lo => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
                _ => 0.0,
            }
        })
        .collect();
    Raster::new(r.spec.clone(), name, values).expect("same spec")
}

/// Normalizes the four maps into `[0, 1]`: semantic as `class / 4`, height and
/// intensity by per-tile min-max, slope as `degrees / 90`. Nodata anywhere
/// resolves to 1 (maximum risk).
pub fn build_feature_stack(
    sem: &ClassRaster,
    height: &Raster,
    slope: &Raster,
    intensity: &Raster,
) -> Result<FeatureStack> {
    let spec = sem.spec.clone();
    spec.ensure_same(&height.spec, "height")?;
    spec.ensure_same(&slope.spec, "slope")?;
    spec.ensure_same(&intensity.spec, "intensity")?;

    let semantic = sem
        .values
        .iter()
        .map(|&c| if c == CLASS_NODATA || c > 4 { 1.0 } else { f32::from(c) / 4.0 })
        .collect();
    let slope_n = slope
        .values
        .iter()
        .map(|&v| {
            if slope.is_nodata(v) || !v.is_finite() {
                1.0
            } else {
                (v / 90.0).clamp(0.0, 1.0)
            }
        })
        .collect();
    let channels = [
        Raster::new(spec.clone(), FEATURE_CHANNELS[0], semantic)?,
        min_max(height, FEATURE_CHANNELS[1]),
        Raster::new(spec.clone(), FEATURE_CHANNELS[2], slope_n)?,
        min_max(intensity, FEATURE_CHANNELS[3]),
    ];
    FeatureStack::new(spec, channels)
}

#[derive(Clone, Debug, Default)]
pub struct RasterizeOptions {
    /// Hole-filling sweeps applied to the height and intensity maps.
    pub fill_iters: usize,
}

/// Intermediate maps kept alongside the stack for previews.
#[derive(Clone, Debug)]
pub struct RasterizedTile {
    pub semantic: ClassRaster,
    pub height: Raster,
    pub slope: Raster,
    pub intensity: Raster,
    pub stack: FeatureStack,
    pub out_of_bounds: usize,
}

/// Full cloud-to-stack pipeline: bin, average, fill holes, derive slope,
/// normalize. When a mask is given, cells without any classed point take the
/// mask class directly.
pub fn rasterize_cloud(
    pc: &PointCloud,
    spec: &GridSpec,
    mask: Option<&ClassRaster>,
    opts: &RasterizeOptions,
) -> Result<RasterizedTile> {
    let bins = bin_points(pc, spec, mask)?;
    let mut semantic = semantic_map(&bins);
    if let Some(m) = mask {
        semantic = fill_semantic_from_mask(&semantic, m)?;
    }
    let height = fill_holes(&height_map(&bins), opts.fill_iters);
    let intensity = fill_holes(&intensity_map(&bins), opts.fill_iters);
    let slope = slope_map(&height);
    let stack = build_feature_stack(&semantic, &height, &slope, &intensity)?;
    Ok(RasterizedTile {
        semantic,
        height,
        slope,
        intensity,
        stack,
        out_of_bounds: bins.out_of_bounds,
    })
}
