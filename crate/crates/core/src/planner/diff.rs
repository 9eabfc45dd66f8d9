//! Differentiable A*.
//!
//! The forward pass is an ordinary A* run that records, for every expansion,
//! the open set with its `g` and `h` values, the selected cell and the cells
//! whose `g` it relaxed. The selection is a hard argmin; the backward pass
//! treats it as `y = onehot + s - stop_grad(s)` with `s = softmax(-f / tau)`
//! over the open set, and each relaxation as
//! `g(v) = sum_{u in N(v)} y(u) g(u) + cost(v)`. The search history is
//! `sum_t y_t`, which on the forward pass is exactly the closed set.

use std::sync::Arc;

use super::{extract_path, Grid, SearchProblem};
use crate::autodiff::{CustomOp, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, GridSpec, PathMap};

/// One expansion of the recorded search.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub selected: usize,
    /// Open cells when `selected` was chosen, with their `g` and `h`.
    pub open: Vec<usize>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// Cells whose `g` was lowered by this expansion.
    pub updated: Vec<usize>,
}

impl TraceStep {
    /// `softmax(-(g + h) / tau)` over the open set, given `g`.
    pub fn selection_weights(&self, g: &[f64], tau: f64) -> Vec<f64> {
        let logits: Vec<f64> = g.iter().zip(&self.h).map(|(g, h)| -(g + h) / tau).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTrace {
    pub width: usize,
    pub height: usize,
    pub start: usize,
    pub tau: f64,
    pub steps: Vec<TraceStep>,
}

impl SearchTrace {
    fn grid(&self) -> Grid {
        Grid {
            w: self.width,
            h: self.height,
        }
    }

    /// Re-evaluates the relaxed history for different `costs` with every
    /// discrete decision (selections, open sets, relaxed cells) held at the
    /// recorded values. At the recorded costs this is the hard history; its
    /// derivative is what the backward pass computes.
    pub fn replay_history(&self, costs: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let n = self.width * self.height;
        let mut g = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut in_open = vec![false; n];
        let mut hist = vec![0.0; n];
        for step in &self.steps {
            let cur: Vec<f64> = step.open.iter().map(|&u| g[u]).collect();
            let s = step.selection_weights(&cur, self.tau);
            let s0 = step.selection_weights(&step.g, self.tau);
            for (k, &u) in step.open.iter().enumerate() {
                let hard = if u == step.selected { 1.0 } else { 0.0 };
                y[u] = hard + (s[k] - s0[k]);
                in_open[u] = true;
                hist[u] += y[u];
            }
            let relaxed: Vec<f64> = step
                .updated
                .iter()
                .map(|&v| grid.neighbors(v).filter(|&u| in_open[u]).map(|u| y[u] * g[u]).sum::<f64>() + costs[v])
                .collect();
            for (&v, gv) in step.updated.iter().zip(relaxed) {
                g[v] = gv;
            }
            for &u in &step.open {
                in_open[u] = false;
                y[u] = 0.0;
            }
        }
        hist
    }
}

/// Result of [`diff_astar_forward`].
pub struct DiffSearch {
    /// `(1, 1, h, w)` search history on the tape.
    pub history: Var,
    pub path: Vec<CellIndex>,
    pub path_map: PathMap,
    pub total_cost: f64,
    pub trace: Arc<SearchTrace>,
}

struct DiffAstarOp {
    trace: Arc<SearchTrace>,
}

impl<T: Real> CustomOp<T> for DiffAstarOp {
    fn name(&self) -> &str {
        "diff_astar"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad_out: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let tr = &self.trace;
        let grid = tr.grid();
        let n = tr.width * tr.height;
        let hbar: Vec<f64> = grad_out.data.iter().map(|v| v.as_f64()).collect();
        let mut gbar = vec![0.0; n];
        let mut cbar = vec![0.0; n];
        let mut pos = vec![usize::MAX; n];
        let inv_tau = 1.0 / tr.tau;
        for step in tr.steps.iter().rev() {
            for (k, &u) in step.open.iter().enumerate() {
                pos[u] = k;
            }
            let mut sbar: Vec<f64> = step.open.iter().map(|&u| hbar[u]).collect();
            for &v in &step.updated {
                let a = gbar[v];
                if a == 0.0 {
                    continue;
                }
                cbar[v] += a;
                gbar[step.selected] += a;
                for u in grid.neighbors(v) {
                    if pos[u] != usize::MAX {
                        sbar[pos[u]] += a * step.g[pos[u]];
                    }
                }
                gbar[v] = 0.0;
            }
            let s = step.selection_weights(&step.g, tr.tau);
            let dot: f64 = s.iter().zip(&sbar).map(|(a, b)| a * b).sum();
            for (k, &u) in step.open.iter().enumerate() {
                gbar[u] -= inv_tau * s[k] * (sbar[k] - dot);
                pos[u] = usize::MAX;
            }
        }
        let data = cbar.into_iter().map(T::of).collect();
        vec![Some(Tensor {
            shape: [1, 1, tr.height, tr.width],
            data,
        })]
    }
}

/// Runs A* on the `(1, 1, h, w)` costmap held by `costmap` and records the
/// differentiable search history.
pub fn diff_astar_forward<T: Real>(tape: &mut Tape<T>, costmap: Var, spec: &GridSpec, p: &SearchProblem) -> Result<DiffSearch> {
    p.validate(spec)?;
    let shape = tape.shape(costmap);
    if shape != [1, 1, spec.height, spec.width] {
        return Err(Error::Shape(format!(
            "costmap {shape:?} does not match {}x{} grid",
            spec.height, spec.width
        )));
    }
    let costs: Vec<f64> = tape.value(costmap).data.iter().map(|v| v.as_f64()).collect();
    if let Some(i) = costs.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::Range(format!("cost {} at cell {} must be positive", costs[i], spec.cell_at(i))));
    }
    let grid = Grid::of(spec);
    let (start, goal) = (grid.index(p.start), grid.index(p.goal));
    let tau = p.tau_for(spec);
    let max_steps = p.max_steps_for(spec);
    let n = spec.len();
    let blocked = |v: usize| p.block_threshold.is_some_and(|t| costs[v] >= f64::from(t));

    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![None; n];
    let mut closed = vec![false; n];
    let mut in_open = vec![false; n];
    let mut open = vec![start];
    g[start] = 0.0;
    in_open[start] = true;
    let mut steps = Vec::new();
    let mut reached = false;

    while !open.is_empty() && steps.len() < max_steps {
        let hs: Vec<f64> = open.iter().map(|&u| grid.heuristic(u, goal, p.heuristic_weight)).collect();
        let mut best = 0;
        for k in 1..open.len() {
            let (fk, fb) = (g[open[k]] + hs[k], g[open[best]] + hs[best]);
            let better = fk
                .total_cmp(&fb)
                .then(hs[k].total_cmp(&hs[best]))
                .then(grid.straightness(open[k], goal).cmp(&grid.straightness(open[best], goal)))
                .then(open[k].cmp(&open[best]));
            if better.is_lt() {
                best = k;
            }
        }
        let u = open[best];
        let mut step = TraceStep {
            selected: u,
            g: open.iter().map(|&v| g[v]).collect(),
            h: hs,
            open: open.clone(),
            updated: Vec::new(),
        };
        open.swap_remove(best);
        in_open[u] = false;
        closed[u] = true;
        if u == goal {
            steps.push(step);
            reached = true;
            break;
        }
        for v in grid.neighbors(u) {
            if closed[v] || blocked(v) {
                continue;
            }
            let cand = g[u] + costs[v];
            if cand < g[v] {
                g[v] = cand;
                parent[v] = Some(u);
                step.updated.push(v);
                if !in_open[v] {
                    in_open[v] = true;
                    open.push(v);
                }
            }
        }
        steps.push(step);
    }
    if !reached {
        let why = if open.is_empty() { "open set exhausted" } else { "step budget exhausted" };
        return Err(Error::NoPath(format!("{why} after {} expansions", steps.len())));
    }

    let path = extract_path(&parent, spec, p.start, p.goal)?;
    let path_map = PathMap::from_cells(spec.clone(), &path)?;
    let history = Tensor {
        shape: [1, 1, spec.height, spec.width],
        data: closed.iter().map(|&c| if c { T::one() } else { T::zero() }).collect(),
    };
    let trace = Arc::new(SearchTrace {
        width: spec.width,
        height: spec.height,
        start,
        tau,
        steps,
    });
    let history = tape.custom(&[costmap], history, Box::new(DiffAstarOp { trace: trace.clone() }))?;
    Ok(DiffSearch {
        history,
        path,
        path_map,
        total_cost: g[goal],
        trace,
    })
}
