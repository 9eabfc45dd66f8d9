//! Grid search on costmaps.
//!
//! Every search uses the same cost model: moving into cell `v` costs
//! `costmap(v)`, steps are 8-connected and unit length (diagonals are not
//! length-weighted), and the heuristic is `c_min` times the Chebyshev
//! distance to the goal. Since every entered cell costs at least `c_min`, the
//! heuristic is consistent and closed cells never need reopening.
//!
//! [`astar`] and [`dijkstra`] are the classic searches. [`diff_astar_forward`]
//! runs the same search on a tape and back-propagates into the costmap with
//! a straight-through estimator.

mod classic;
mod diff;
mod export;

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, GridSpec, PathMap, C_MIN};

pub use classic::{astar, dijkstra, dijkstra_with};
pub use diff::{diff_astar_forward, DiffSearch, SearchTrace, TraceStep};
pub use export::{path_geojson, read_path_csv, write_path_csv, write_path_geojson};

/// Cells whose cost reaches this value can be treated as impassable.
pub const DEFAULT_BLOCK_THRESHOLD: f32 = 0.999;

/// A start/goal query with search settings. The costmap is passed
/// separately so one network output can serve many queries.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchProblem {
    pub start: CellIndex,
    pub goal: CellIndex,
    /// Softmax temperature of the differentiable search; `None` means
    /// `sqrt(h * w)`.
    pub tau: Option<f64>,
    /// Expansion budget; `None` means `h * w`.
    pub max_steps: Option<usize>,
    /// Multiplier on the heuristic. 0 gives Dijkstra order; values above 1
    /// forfeit optimality.
    pub heuristic_weight: f64,
    /// Cells with cost at or above this are never entered.
    pub block_threshold: Option<f32>,
}

impl SearchProblem {
    pub fn new(start: CellIndex, goal: CellIndex) -> Self {
        SearchProblem {
            start,
            goal,
            tau: None,
            max_steps: None,
            heuristic_weight: 1.0,
            block_threshold: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        for (what, c) in [("start", self.start), ("goal", self.goal)] {
            if !spec.contains_cell(c) {
                return Err(Error::InvalidProblem(format!(
                    "{what} {c} outside {}x{} grid",
                    spec.height, spec.width
                )));
            }
        }
        if self.start == self.goal {
            return Err(Error::InvalidProblem(format!("start and goal are both {}", self.start)));
        }
        if let Some(t) = self.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidProblem(format!("tau must be positive, got {t}")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidProblem("max_steps must be at least 1".into()));
        }
        if !(self.heuristic_weight.is_finite() && self.heuristic_weight >= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "heuristic weight must be non-negative, got {}",
                self.heuristic_weight
            )));
        }
        Ok(())
    }

    pub fn tau_for(&self, spec: &GridSpec) -> f64 {
        self.tau.unwrap_or_else(|| (spec.len() as f64).sqrt())
    }

    pub fn max_steps_for(&self, spec: &GridSpec) -> usize {
        self.max_steps.unwrap_or(spec.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    /// Start to goal inclusive.
    pub path: Vec<CellIndex>,
    /// Sum of costs of every entered cell (the start is excluded).
    pub total_cost: f64,
    pub expansions: usize,
}

/// Row-major grid geometry used inside the searches.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Grid {
    pub w: usize,
    pub h: usize,
}

impl Grid {
    pub fn of(spec: &GridSpec) -> Self {
        Grid {
            w: spec.width,
            h: spec.height,
        }
    }

    pub fn index(&self, c: CellIndex) -> usize {
        c.row * self.w + c.col
    }

    pub fn cell(&self, i: usize) -> CellIndex {
        CellIndex::new(i / self.w, i % self.w)
    }

    /// 8-neighbors in a fixed order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (r, c) = ((i / self.w) as isize, (i % self.w) as isize);
        let (w, h) = (self.w as isize, self.h as isize);
        const OFFSETS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        OFFSETS.into_iter().filter_map(move |(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            (rr >= 0 && cc >= 0 && rr < h && cc < w).then_some((rr * w + cc) as usize)
        })
    }

    /// `weight * c_min * chebyshev(i, goal)`.
    pub fn heuristic(&self, i: usize, goal: usize, weight: f64) -> f64 {
        let (r, c) = (i / self.w, i % self.w);
        let (gr, gc) = (goal / self.w, goal % self.w);
        weight * f64::from(C_MIN) * r.abs_diff(gr).max(c.abs_diff(gc)) as f64
    }

    /// Squared Euclidean distance to the goal in cells. Breaks ties between
    /// equal `(f, h)` so uniform maps give straight paths.
    pub fn straightness(&self, i: usize, goal: usize) -> usize {
        let (r, c) = (i / self.w, i % self.w);
        let (gr, gc) = (goal / self.w, goal % self.w);
        r.abs_diff(gr).pow(2) + c.abs_diff(gc).pow(2)
    }
}

/// Walks `parents` back from `goal` and returns the start-to-goal cell list.
pub fn extract_path(parents: &[Option<usize>], spec: &GridSpec, start: CellIndex, goal: CellIndex) -> Result<Vec<CellIndex>> {
    let grid = Grid::of(spec);
    if parents.len() != spec.len() {
        return Err(Error::Shape(format!("{} parent links for {} cells", parents.len(), spec.len())));
    }
    spec.check_cell(start)?;
    spec.check_cell(goal)?;
    let (s, mut cur) = (grid.index(start), grid.index(goal));
    let mut rev = vec![cur];
    while cur != s {
        let p = parents[cur].ok_or_else(|| Error::BrokenChain(format!("cell {} has no parent", grid.cell(cur))))?;
        if p == cur || p >= parents.len() || rev.len() > parents.len() {
            return Err(Error::BrokenChain(format!("invalid parent link at cell {}", grid.cell(cur))));
        }
        if !grid.neighbors(cur).any(|n| n == p) {
            return Err(Error::BrokenChain(format!(
                "parent {} of cell {} is not adjacent",
                grid.cell(p),
                grid.cell(cur)
            )));
        }
        cur = p;
        rev.push(cur);
    }
    Ok(rev.into_iter().rev().map(|i| grid.cell(i)).collect())
}

/// Mean absolute difference between a search history and a path mask.
pub fn path_loss<T: Real>(tape: &mut Tape<T>, history: Var, gt: &PathMap) -> Result<Var> {
    let [n, c, h, w] = tape.shape(history);
    if n != 1 || c != 1 || h != gt.spec.height || w != gt.spec.width {
        return Err(Error::Shape(format!(
            "history {:?} vs path map {}x{}",
            [n, c, h, w],
            gt.spec.height,
            gt.spec.width
        )));
    }
    let target = Tensor::from_f32([1, 1, h, w], &gt.to_f32())?;
    tape.l1_mean(history, &target)
}
