use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{extract_path, Grid, PathResult, SearchProblem};
use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, CostMap};

/// Heap entry ordered so the smallest `(f, h, straightness, index)` pops first.
#[derive(Clone, Copy, Debug)]
struct Entry {
    f: f64,
    h: f64,
    straight: usize,
    index: usize,
    g: f64,
}

impl Entry {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.h.total_cmp(&other.h))
            .then(self.straight.cmp(&other.straight))
            .then(self.index.cmp(&other.index))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

fn blocked(cost: f32, threshold: Option<f32>) -> bool {
    threshold.is_some_and(|t| cost >= t)
}

/// Optimal 8-connected path under the entered-cell cost model.
pub fn astar(costmap: &CostMap, p: &SearchProblem) -> Result<PathResult> {
    let spec = &costmap.spec;
    p.validate(spec)?;
    let grid = Grid::of(spec);
    let (start, goal) = (grid.index(p.start), grid.index(p.goal));
    let n = spec.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[start] = 0.0;
    let h0 = grid.heuristic(start, goal, p.heuristic_weight);
    heap.push(Entry {
        f: h0,
        h: h0,
        straight: grid.straightness(start, goal),
        index: start,
        g: 0.0,
    });
    let mut expansions = 0;
    while let Some(e) = heap.pop() {
        if closed[e.index] || e.g > g[e.index] {
            continue;
        }
        closed[e.index] = true;
        expansions += 1;
        if e.index == goal {
            let path = extract_path(&parent, spec, p.start, p.goal)?;
            return Ok(PathResult {
                path,
                total_cost: g[goal],
                expansions,
            });
        }
        for v in grid.neighbors(e.index) {
            let c = costmap.values[v];
            if closed[v] || blocked(c, p.block_threshold) {
                continue;
            }
            let cand = e.g + f64::from(c);
            if cand < g[v] {
                g[v] = cand;
                parent[v] = Some(e.index);
                let h = grid.heuristic(v, goal, p.heuristic_weight);
                heap.push(Entry {
                    f: cand + h,
                    h,
                    straight: grid.straightness(v, goal),
                    index: v,
                    g: cand,
                });
            }
        }
    }
    Err(Error::NoPath(format!("goal {} unreachable from {}", p.goal, p.start)))
}

/// Single-source optimal costs from `start`; unreachable cells are infinite.
pub fn dijkstra(costmap: &CostMap, start: CellIndex) -> Result<Vec<f64>> {
    dijkstra_with(costmap, start, None)
}

/// [`dijkstra`] that never enters cells with cost at or above `block_threshold`.
pub fn dijkstra_with(costmap: &CostMap, start: CellIndex, block_threshold: Option<f32>) -> Result<Vec<f64>> {
    let spec = &costmap.spec;
    spec.check_cell(start)?;
    let grid = Grid::of(spec);
    let mut dist = vec![f64::INFINITY; spec.len()];
    let s = grid.index(start);
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        f: 0.0,
        h: 0.0,
        straight: 0,
        index: s,
        g: 0.0,
    });
    while let Some(e) = heap.pop() {
        if e.g > dist[e.index] {
            continue;
        }
        for v in grid.neighbors(e.index) {
            let c = costmap.values[v];
            if blocked(c, block_threshold) {
                continue;
            }
            let cand = e.g + f64::from(c);
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Entry {
                    f: cand,
                    h: 0.0,
                    straight: 0,
                    index: v,
                    g: cand,
                });
            }
        }
    }
    Ok(dist)
}
