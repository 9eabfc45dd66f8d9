use std::collections::VecDeque;

use super::{CellIndex, GridSpec, PathMap, Trajectory};
use crate::error::{Error, Result};

pub fn is_eight_adjacent(a: CellIndex, b: CellIndex) -> bool {
    a != b && a.chebyshev(b) == 1
}

/// Integer line from `a` to `b` inclusive; consecutive cells are 8-adjacent.
pub(crate) fn line_cells(a: CellIndex, b: CellIndex) -> Vec<CellIndex> {
    let (mut x, mut y) = (a.col as i64, a.row as i64);
    let (x1, y1) = (b.col as i64, b.row as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push(CellIndex::new(y as usize, x as usize));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Ordered cell walk of a trajectory: waypoint cells joined by integer lines,
/// with consecutive duplicates collapsed.
pub fn trajectory_cells(spec: &GridSpec, traj: &Trajectory) -> Result<Vec<CellIndex>> {
    let waypoints = traj
        .points
        .iter()
        .map(|&p| spec.geo_to_cell(p))
        .collect::<Result<Vec<_>>>()?;
    let mut walk: Vec<CellIndex> = Vec::new();
    for pair in waypoints.windows(2) {
        for c in line_cells(pair[0], pair[1]) {
            if walk.last() != Some(&c) {
                walk.push(c);
            }
        }
    }
    if walk.len() < 2 {
        return Err(Error::DegenerateTrajectory(format!(
            "all {} waypoints fall in cell {}",
            traj.len(),
            waypoints[0]
        )));
    }
    Ok(walk)
}

pub fn rasterize_trajectory(spec: &GridSpec, traj: &Trajectory) -> Result<PathMap> {
    let cells = trajectory_cells(spec, traj)?;
    PathMap::from_cells(spec.clone(), &cells)
}

/// True when `start` and `goal` are set and every set cell is reachable from
/// `start` through set cells under 8-connectivity.
pub fn is_eight_connected_chain(map: &PathMap, start: CellIndex, goal: CellIndex) -> bool {
    let spec = &map.spec;
    if !spec.contains_cell(start) || !spec.contains_cell(goal) || !map.is_set(start) || !map.is_set(goal) {
        return false;
    }
    let mut seen = vec![false; spec.len()];
    let mut queue = VecDeque::from([start]);
    seen[spec.index(start)] = true;
    let mut reached = 1usize;
    while let Some(c) = queue.pop_front() {
        for n in neighbors8(spec, c) {
            let i = spec.index(n);
            if map.values[i] != 0 && !seen[i] {
                seen[i] = true;
                reached += 1;
                queue.push_back(n);
            }
        }
    }
    seen[spec.index(goal)] && reached == map.count()
}

pub(crate) fn neighbors8(spec: &GridSpec, c: CellIndex) -> impl Iterator<Item = CellIndex> + '_ {
    const OFFSETS: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    OFFSETS.iter().filter_map(move |&(dr, dc)| {
        let r = c.row as i64 + dr;
        let k = c.col as i64 + dc;
        (r >= 0 && k >= 0 && (r as usize) < spec.height && (k as usize) < spec.width)
            .then(|| CellIndex::new(r as usize, k as usize))
    })
}
