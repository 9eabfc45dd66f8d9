//! Synthetic data, imitation training and evaluation.
//!
//! Each training step runs the network on a feature stack, searches the
//! predicted costmap with differentiable A* between the expert's endpoints,
//! and penalizes the L1 distance between the search history and the expert
//! path.

mod dataset;
mod noise;
mod optim;
mod scenario;
mod snap;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, CostMap};
use crate::model::{save_checkpoint, stack_tensor, Model, ModelConfig};
use crate::planner::{astar, diff_astar_forward, path_loss, SearchProblem, DEFAULT_BLOCK_THRESHOLD};

pub use dataset::{
    load_instance, load_split, make_dataset, split_ids, Instance, InstanceEntry, Manifest, Splits, DEFAULT_SPLIT,
    MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
pub use optim::{clip_grad_norm, Adam};
pub use scenario::{generate_scenario, generate_scenario_with, ground_truth_cost, Scenario, ScenarioParams, SCENARIO_ATTEMPTS};
pub use snap::{snap_trajectory, SnappedPath};

pub const BEST_CHECKPOINT: &str = "best.tbck";
pub const LAST_CHECKPOINT: &str = "last.tbck";

fn default_batch_size() -> usize {
    1
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_grad_clip() -> f64 {
    1.0
}

fn default_heuristic_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Directory holding `manifest.json`.
    pub dataset: PathBuf,
    /// Train/val/test fractions. When set, the manifest's instances are
    /// re-split with the training seed instead of using its stored splits.
    #[serde(default)]
    pub split_fractions: Option<[f64; 3]>,
    pub checkpoint_dir: PathBuf,
    pub log_path: PathBuf,
    #[serde(default = "default_grad_clip")]
    pub grad_clip: f64,
    /// Scale of the search heuristic during training and loss evaluation.
    #[serde(default = "default_heuristic_weight")]
    pub heuristic_weight: f64,
    /// Network shape; defaults to the standard widths seeded with `seed`.
    #[serde(default)]
    pub model: Option<ModelConfig>,
}

impl TrainConfig {
    pub fn new(dataset: impl Into<PathBuf>, checkpoint_dir: impl Into<PathBuf>, log_path: impl Into<PathBuf>) -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            seed: 0,
            tau: None,
            max_steps: None,
            dataset: dataset.into(),
            split_fractions: None,
            checkpoint_dir: checkpoint_dir.into(),
            log_path: log_path.into(),
            grad_clip: default_grad_clip(),
            heuristic_weight: default_heuristic_weight(),
            model: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        if let Some(t) = self.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("tau must be positive, got {t}")));
            }
        }
        if let Some(f) = self.split_fractions {
            let sum: f64 = f.iter().sum();
            if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("split fractions {f:?} must sum to 1")));
            }
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset.join(MANIFEST_FILE)
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(|| ModelConfig::with_seed(self.seed))
    }

    pub fn problem(&self, start: CellIndex, goal: CellIndex) -> SearchProblem {
        let mut p = SearchProblem::new(start, goal);
        p.tau = self.tau;
        p.max_steps = self.max_steps;
        p.heuristic_weight = self.heuristic_weight;
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
    /// Instances whose search hit the step budget or whose gradient was not
    /// finite, train and val combined.
    pub skipped: usize,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.train_loss, self.val_loss, self.skipped)
    }
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,skipped";

pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub model: Model<f32>,
    pub best_model: Model<f32>,
}

/// Loss and parameter gradients for one instance.
fn instance_gradients(model: &Model<f32>, inst: &Instance, p: &SearchProblem) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let x = tape.constant(stack_tensor(&inst.stack)?);
    let fwd = model.forward_on(&mut tape, x, true)?;
    let search = diff_astar_forward(&mut tape, fwd.costmap, &inst.stack.spec, p)?;
    let loss = path_loss(&mut tape, search.history, &inst.path_map)?;
    let value = f64::from(tape.value(loss).item());
    tape.backward(loss)?;
    let grads = fwd
        .params
        .iter()
        .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v))))
        .collect();
    Ok((value, grads))
}

/// Path loss of the hard search on a fixed costmap.
pub fn history_loss(costmap: &CostMap, inst: &Instance, p: &SearchProblem) -> Result<f64> {
    let spec = &costmap.spec;
    let mut tape = Tape::<f32>::new();
    let c = tape.constant(Tensor::new([1, 1, spec.height, spec.width], costmap.values.clone())?);
    let search = diff_astar_forward(&mut tape, c, spec, p)?;
    let loss = path_loss(&mut tape, search.history, &inst.path_map)?;
    Ok(f64::from(tape.value(loss).item()))
}

fn mean_loss(model: &Model<f32>, set: &[Instance], cfg: &TrainConfig) -> Result<(f64, usize)> {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for inst in set {
        let cm = model.predict(&inst.stack)?;
        match history_loss(&cm, inst, &cfg.problem(inst.start, inst.goal)) {
            Ok(l) => {
                sum += l;
                n += 1;
            }
            Err(Error::NoPath(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((if n > 0 { sum / n as f64 } else { f64::NAN }, skipped))
}

fn resolve_splits(cfg: &TrainConfig, manifest: &Manifest) -> Result<Splits> {
    match cfg.split_fractions {
        Some(f) => {
            let ids: Vec<String> = manifest.instances.iter().map(|e| e.id.clone()).collect();
            split_ids(&ids, f, cfg.seed)
        }
        None => Ok(manifest.splits.clone()),
    }
}

/// Trains a model as configured, writing the epoch log and the best and
/// last checkpoints.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(cfg, |_, _| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F>(cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainReport>
where
    F: FnMut(&EpochLog, &Model<f32>),
{
    cfg.validate()?;
    let manifest_path = cfg.manifest_path();
    let manifest = Manifest::read(&manifest_path)?;
    let splits = resolve_splits(cfg, &manifest)?;
    if splits.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let train_set = load_split(&manifest_path, &manifest, &splits.train)?;
    let val_set = load_split(&manifest_path, &manifest, &splits.val)?;

    let mut model = Model::<f32>::init(cfg.model_config())?;
    let mut best_model = model.clone();
    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    fs::create_dir_all(&cfg.checkpoint_dir).map_err(|e| Error::io(&cfg.checkpoint_dir, e))?;
    if let Some(parent) = cfg.log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(&cfg.log_path).map_err(|e| Error::io(&cfg.log_path, e))?;
    let mut log_file = BufWriter::new(file);
    let write_line = |w: &mut BufWriter<File>, line: &str| -> Result<()> {
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&cfg.log_path, e))
    };
    write_line(&mut log_file, LOG_HEADER)?;

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen, mut skipped) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Tensor<f32>>> = None;
            let mut in_batch = 0;
            for &i in batch {
                let inst = &train_set[i];
                match instance_gradients(&model, inst, &cfg.problem(inst.start, inst.goal)) {
                    Ok((l, g)) => {
                        loss_sum += l;
                        seen += 1;
                        in_batch += 1;
                        match &mut acc {
                            Some(a) => a.iter_mut().zip(&g).for_each(|(a, g)| a.add_assign(g)),
                            None => acc = Some(g),
                        }
                    }
                    Err(Error::NoPath(msg)) => {
                        log::warn!("epoch {epoch}: skipping {}: {msg}", inst.id);
                        skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            let Some(mut grads) = acc else { continue };
            if in_batch > 1 {
                let s = 1.0 / in_batch as f32;
                grads.iter_mut().flat_map(|g| g.data.iter_mut()).for_each(|v| *v *= s);
            }
            let norm = clip_grad_norm(&mut grads, cfg.grad_clip);
            if !norm.is_finite() {
                log::warn!("epoch {epoch}: non-finite gradient, batch of {in_batch} skipped");
                skipped += in_batch;
                continue;
            }
            let mut params: Vec<&mut Tensor<f32>> = model.params.iter_mut().map(|(_, t)| t).collect();
            opt.step(&mut params, &grads);
        }
        if !model.is_finite() {
            return Err(Error::Range(format!("parameters diverged in epoch {epoch}")));
        }
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { f64::NAN };
        let (val_loss, val_skipped) = mean_loss(&model, &val_set, cfg)?;
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            skipped: skipped + val_skipped,
        };
        log::info!("{}", entry.csv_row());
        write_line(&mut log_file, &entry.csv_row())?;

        let score = if val_loss.is_nan() { train_loss } else { val_loss };
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, epoch));
            best_model = model.clone();
            save_checkpoint(&model, cfg.checkpoint_dir.join(BEST_CHECKPOINT))?;
        }
        save_checkpoint(&model, cfg.checkpoint_dir.join(LAST_CHECKPOINT))?;
        on_epoch(&entry, &model);
        log.push(entry);
    }
    Ok(TrainReport {
        log,
        best_epoch: best.map_or(1, |(_, e)| e),
        model,
        best_model,
    })
}

/// Reads an epoch log written by [`train`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EpochLog>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some(LOG_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header '{LOG_HEADER}'"),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 1,
                msg: format!("malformed log row '{l}'"),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(EpochLog {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_loss: f[2].parse().map_err(|_| bad())?,
                skipped: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean search-history loss.
    pub loss: f64,
    /// Symmetric mean nearest-cell distance between planned and expert
    /// paths, in cells.
    pub chamfer: f64,
    /// Share of planned paths that avoid every impassable ground-truth cell.
    pub success: f64,
    /// Planned path cost over expert path cost, both on the learned map.
    pub cost_ratio: f64,
    pub count: usize,
    pub skipped: usize,
}

/// Symmetric Chamfer distance between two cell sets.
pub fn chamfer_distance(a: &[CellIndex], b: &[CellIndex]) -> f64 {
    let one_way = |from: &[CellIndex], to: &[CellIndex]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p.row as f64 - q.row as f64).hypot(p.col as f64 - q.col as f64))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    (one_way(a, b) + one_way(b, a)) / 2.0
}

/// Metrics for any costmap source; `costmap_for` maps an instance to the map
/// that is searched.
pub fn evaluate_with<F>(instances: &[Instance], template: &SearchProblem, mut costmap_for: F) -> Result<Metrics>
where
    F: FnMut(&Instance) -> Result<CostMap>,
{
    let (mut loss, mut chamfer, mut success, mut ratio) = (0.0, 0.0, 0.0, 0.0);
    let (mut count, mut skipped) = (0usize, 0usize);
    for inst in instances {
        let cm = costmap_for(inst)?;
        let p = SearchProblem {
            start: inst.start,
            goal: inst.goal,
            ..template.clone()
        };
        let l = match history_loss(&cm, inst, &p) {
            Ok(l) => l,
            Err(Error::NoPath(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let planned = match astar(&cm, &p) {
            Ok(r) => r,
            Err(Error::NoPath(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let expert_cost: f64 = inst.path[1..].iter().map(|&c| f64::from(cm.get(c))).sum();
        let safe = inst
            .gt_cost
            .as_ref()
            .is_none_or(|gt| planned.path.iter().all(|&c| gt.get(c) < DEFAULT_BLOCK_THRESHOLD));
        loss += l;
        chamfer += chamfer_distance(&planned.path, &inst.path);
        success += if safe { 1.0 } else { 0.0 };
        ratio += planned.total_cost / expert_cost;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Config("no instance could be evaluated".into()));
    }
    let n = count as f64;
    Ok(Metrics {
        loss: loss / n,
        chamfer: chamfer / n,
        success: success / n,
        cost_ratio: ratio / n,
        count,
        skipped,
    })
}

/// Metrics of `model` on one split (`train`, `val` or `test`) of a dataset.
pub fn evaluate(model: &Model<f32>, dataset_dir: &Path, split: &str, template: &SearchProblem) -> Result<Metrics> {
    let manifest_path = dataset_dir.join(MANIFEST_FILE);
    let manifest = Manifest::read(&manifest_path)?;
    let ids = manifest
        .splits
        .get(split)
        .ok_or_else(|| Error::Config(format!("unknown split '{split}'")))?
        .to_vec();
    let set = load_split(&manifest_path, &manifest, &ids)?;
    evaluate_with(&set, template, |inst| model.predict(&inst.stack))
}
