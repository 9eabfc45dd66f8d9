//! Learned traversal costmaps for long-range off-road planning.
//!
//! The crate covers the whole pipeline: turning overhead terrain data into a
//! four-channel feature stack ([`raster`]), a small convolutional costmap
//! network ([`model`]) trained by imitation through a differentiable A*
//! search ([`planner`], [`autodiff`]), and the dataset/training tooling
//! around it ([`train`]).

pub mod autodiff;
pub mod error;
pub mod geogrid;
pub mod ingest;
pub mod model;
pub mod planner;
pub mod raster;
pub mod train;

mod util;

pub use error::{Error, Result};
pub use geogrid::{CellIndex, CostMap, FeatureStack, GeoPoint, GridSpec, PathMap, Raster, Trajectory, C_MIN};
