use std::fs;
use std::path::Path;

use chrono::DateTime;

use crate::error::{Error, Result};
use crate::geogrid::{GeoPoint, Trajectory};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Local equirectangular projection: `(lat0, lon0)` maps to `(x0, y0)`,
/// `x = x0 + R * dlon * cos(lat0)`, `y = y0 + R * dlat`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalProjection {
    pub lat0_deg: f64,
    pub lon0_deg: f64,
    pub x0: f64,
    pub y0: f64,
}

impl LocalProjection {
    pub fn anchored_at(lat0_deg: f64, lon0_deg: f64) -> Self {
        LocalProjection {
            lat0_deg,
            lon0_deg,
            x0: 0.0,
            y0: 0.0,
        }
    }

    pub fn project(&self, lat_deg: f64, lon_deg: f64) -> (f64, f64) {
        let cos0 = self.lat0_deg.to_radians().cos();
        let x = self.x0 + EARTH_RADIUS_M * (lon_deg - self.lon0_deg).to_radians() * cos0;
        let y = self.y0 + EARTH_RADIUS_M * (lat_deg - self.lat0_deg).to_radians();
        (x, y)
    }
}

struct TrackPoint {
    lat: f64,
    lon: f64,
    ele: Option<f64>,
    time: Option<f64>,
}

/// Parses track points, projecting them with a local projection anchored at
/// the first point.
pub fn parse_gpx(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_gpx_with(path, None)
}

pub fn parse_gpx_with(path: impl AsRef<Path>, projection: Option<LocalProjection>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gpx_str(&text, projection)
}

pub fn parse_gpx_str(text: &str, projection: Option<LocalProjection>) -> Result<Trajectory> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Parse {
        line: e.pos().row as usize,
        msg: e.to_string(),
    })?;
    let mut pts = Vec::new();
    for trk in doc.descendants().filter(|n| n.has_tag_name("trk")) {
        for seg in trk.children().filter(|n| n.has_tag_name("trkseg")) {
            for tp in seg.children().filter(|n| n.has_tag_name("trkpt")) {
                pts.push(track_point(&doc, tp)?);
            }
        }
    }
    if pts.len() < 2 {
        return Err(Error::Format(format!("GPX needs at least 2 track points, found {}", pts.len())));
    }
    let proj = projection.unwrap_or_else(|| LocalProjection::anchored_at(pts[0].lat, pts[0].lon));
    let points = pts
        .iter()
        .map(|p| {
            let (x, y) = proj.project(p.lat, p.lon);
            GeoPoint { x, y, z: p.ele }
        })
        .collect();
    let timestamps = pts.iter().map(|p| p.time).collect::<Option<Vec<f64>>>();
    Trajectory::new(points, timestamps)
}

fn track_point(doc: &roxmltree::Document, node: roxmltree::Node) -> Result<TrackPoint> {
    let line = doc.text_pos_at(node.range().start).row as usize;
    let coord = |name: &str, limit: f64| -> Result<f64> {
        let raw = node.attribute(name).ok_or_else(|| Error::Parse {
            line,
            msg: format!("trkpt missing '{name}'"),
        })?;
        let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid {name} '{raw}'"),
        })?;
        if !v.is_finite() || v.abs() > limit {
            return Err(Error::Parse {
                line,
                msg: format!("{name} {v} out of range"),
            });
        }
        Ok(v)
    };
    let lat = coord("lat", 90.0)?;
    let lon = coord("lon", 180.0)?;
    let child_text = |name: &str| {
        node.children()
            .find(|c| c.has_tag_name(name))
            .and_then(|c| c.text())
            .map(str::trim)
    };
    let ele = child_text("ele")
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid ele '{t}'"),
            })
        })
        .transpose()?;
    let time = child_text("time")
        .map(|t| {
            DateTime::parse_from_rfc3339(t)
                .map(|dt| dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("invalid time '{t}': {e}"),
                })
        })
        .transpose()?;
    Ok(TrackPoint { lat, lon, ele, time })
}
