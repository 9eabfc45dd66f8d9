use crate::error::{Error, Result};
use crate::geogrid::{trajectory_cells, CellIndex, GeoPoint, GridSpec, PathMap, Trajectory};

/// A trajectory reduced to supervision on one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct SnappedPath {
    pub path_map: PathMap,
    /// Ordered cell walk, start to goal.
    pub cells: Vec<CellIndex>,
    pub start: CellIndex,
    pub goal: CellIndex,
}

/// Part of segment `a -> b` inside the tile rectangle as parameters
/// `(t0, t1)` with `0 <= t0 <= t1 <= 1` (Liang-Barsky).
fn clip(spec: &GridSpec, a: GeoPoint, b: GeoPoint) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let edges = [
        (-dx, a.x - spec.origin_x),
        (dx, spec.max_x() - a.x),
        (-dy, a.y - spec.min_y()),
        (dy, spec.origin_y - a.y),
    ];
    for (p, q) in edges {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

fn lerp(a: GeoPoint, b: GeoPoint, t: f64) -> GeoPoint {
    GeoPoint::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

fn polyline_length(points: &[GeoPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

/// In-tile pieces of the trajectory, split wherever it leaves the tile.
fn in_tile_runs(spec: &GridSpec, pts: &[GeoPoint]) -> Vec<Vec<GeoPoint>> {
    let mut runs: Vec<Vec<GeoPoint>> = Vec::new();
    let mut cur: Vec<GeoPoint> = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        match clip(spec, a, b) {
            Some((t0, t1)) => {
                // Clamp away rounding so boundary points stay on the tile.
                let inside = |p: GeoPoint| {
                    GeoPoint::new(p.x.clamp(spec.origin_x, spec.max_x()), p.y.clamp(spec.min_y(), spec.origin_y))
                };
                let (p, q) = (inside(lerp(a, b, t0)), inside(lerp(a, b, t1)));
                if t0 > 0.0 || cur.is_empty() {
                    if !cur.is_empty() {
                        runs.push(std::mem::take(&mut cur));
                    }
                    cur.push(p);
                }
                cur.push(q);
                if t1 < 1.0 {
                    runs.push(std::mem::take(&mut cur));
                }
            }
            None => {
                if !cur.is_empty() {
                    runs.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Rasterizes a trajectory onto `spec`. Parts outside the tile are cut off at
/// the boundary and only the longest in-tile piece is kept.
pub fn snap_trajectory(traj: &Trajectory, spec: &GridSpec) -> Result<SnappedPath> {
    let pts = &traj.points;
    let runs = if pts.len() == 1 {
        vec![pts.clone()]
    } else {
        in_tile_runs(spec, pts)
    };
    let best = runs
        .into_iter()
        .filter(|r| r.len() >= 2)
        .fold(None::<(f64, Vec<GeoPoint>)>, |acc, r| {
            let len = polyline_length(&r);
            match acc {
                Some((l, _)) if l >= len => acc,
                _ => Some((len, r)),
            }
        })
        .ok_or_else(|| Error::DegenerateTrajectory("no part of the trajectory lies inside the tile".into()))?
        .1;
    let piece = Trajectory::new(best, None)?;
    let cells = trajectory_cells(spec, &piece)?;
    let (start, goal) = (cells[0], *cells.last().expect("non-empty"));
    if start == goal {
        return Err(Error::DegenerateTrajectory(format!("trajectory starts and ends in cell {start}")));
    }
    let path_map = PathMap::from_cells(spec.clone(), &cells)?;
    Ok(SnappedPath {
        path_map,
        cells,
        start,
        goal,
    })
}
