//! Readers (and matching writers) for the external data products: point
//! clouds, ESRI ASCII DEMs, GPX tracks and PGM class masks.

mod dem;
mod gpx;
mod pgm;
mod points;

pub use crate::geogrid::Trajectory;
pub use dem::{dem_to_points, read_dem_asc, write_dem_asc, DemGrid};
pub use gpx::{parse_gpx, parse_gpx_str, parse_gpx_with, LocalProjection, EARTH_RADIUS_M};
pub use pgm::{
    read_pgm, read_semantic_mask, write_pgm, write_semantic_mask, ClassRaster, Gray8, TerrainClass, CLASS_NODATA,
};
pub use points::{read_points, write_points_bin, write_points_csv, Point, PointCloud, TBPT_MAGIC};
