use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::generate_scenario;
use super::snap::snap_trajectory;
use crate::error::{Error, Result};
use crate::geogrid::{read_raster, write_raster, CellIndex, CostMap, FeatureStack, PathMap, Raster};
use crate::ingest::parse_gpx;
use crate::planner::{read_path_csv, write_path_csv};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: String,
    pub seed: u64,
    /// Paths relative to the manifest directory.
    pub stack: String,
    pub traj: String,
    pub gt_cost: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub instances: Vec<InstanceEntry>,
    pub splits: Splits,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported manifest schema {}", m.schema_version)));
        }
        for id in m.splits.train.iter().chain(&m.splits.val).chain(&m.splits.test) {
            if m.entry(id).is_none() {
                return Err(Error::Format(format!("split lists unknown instance '{id}'")));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn entry(&self, id: &str) -> Option<&InstanceEntry> {
        self.instances.iter().find(|e| e.id == id)
    }
}

/// Seeded partition of `ids` by `fractions` (train, val, test). Train and
/// val sizes are rounded; test takes the remainder.
pub fn split_ids(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<Splits> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let n = order.len();
    let n_train = ((n as f64 * fractions[0]).round() as usize).min(n);
    let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train);
    let mut rest = order.split_off(n_train);
    let test = rest.split_off(n_val);
    Ok(Splits {
        train: order,
        val: rest,
        test,
    })
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Generates `n` scenarios under `out_dir` and writes the manifest. Seeds
/// whose scenario cannot be solved are skipped in favor of the next draw.
pub fn make_dataset(n: usize, seed: u64, size: usize, out_dir: impl AsRef<Path>, fractions: [f64; 3]) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::Config("dataset needs at least one instance".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    let mut failures = 0;
    while instances.len() < n {
        let inst_seed = rng.next_u64();
        let sc = match generate_scenario(inst_seed, size) {
            Ok(s) => s,
            Err(Error::RetryExhausted(msg)) => {
                failures += 1;
                log::warn!("{msg}");
                if failures > 10 * n {
                    return Err(Error::RetryExhausted(format!("{failures} unsolvable scenarios")));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let id = format!("inst_{:05}", instances.len());
        let entry = InstanceEntry {
            stack: format!("{id}.tbrz"),
            traj: format!("{id}.csv"),
            gt_cost: Some(format!("{id}_gt.tbrz")),
            id,
            seed: inst_seed,
        };
        write_raster(out_dir.join(&entry.stack), &sc.stack.channels)?;
        write_path_csv(out_dir.join(&entry.traj), &sc.path)?;
        write_raster(out_dir.join(entry.gt_cost.as_ref().expect("set above")), std::slice::from_ref(&sc.gt_cost))?;
        instances.push(entry);
    }
    let ids: Vec<String> = instances.iter().map(|e| e.id.clone()).collect();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        instances,
        splits: split_ids(&ids, fractions, seed)?,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// One training example loaded from disk.
#[derive(Clone, Debug)]
pub struct Instance {
    pub id: String,
    pub stack: FeatureStack,
    pub path_map: PathMap,
    pub path: Vec<CellIndex>,
    pub start: CellIndex,
    pub goal: CellIndex,
    pub gt_cost: Option<CostMap>,
}

fn read_stack(path: &Path) -> Result<FeatureStack> {
    FeatureStack::from_rasters(read_raster(path)?)
}

/// Loads one instance. Trajectories are either `row,col` cell CSVs or GPX
/// tracks, which are snapped onto the stack's grid.
pub fn load_instance(dir: &Path, entry: &InstanceEntry) -> Result<Instance> {
    let stack = read_stack(&dir.join(&entry.stack))?;
    let spec = stack.spec.clone();
    let traj_path: PathBuf = dir.join(&entry.traj);
    let is_gpx = traj_path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gpx"));
    let (path, path_map, start, goal) = if is_gpx {
        let s = snap_trajectory(&parse_gpx(&traj_path)?, &spec)?;
        (s.cells, s.path_map, s.start, s.goal)
    } else {
        let cells = read_path_csv(&traj_path)?;
        if cells.len() < 2 || cells[0] == cells[cells.len() - 1] {
            return Err(Error::DegenerateTrajectory(format!("{}: path needs distinct endpoints", traj_path.display())));
        }
        let map = PathMap::from_cells(spec.clone(), &cells)?;
        let (s, g) = (cells[0], cells[cells.len() - 1]);
        (cells, map, s, g)
    };
    let gt_cost = match &entry.gt_cost {
        Some(p) => {
            let rasters: Vec<Raster> = read_raster(dir.join(p))?;
            let r = rasters
                .first()
                .ok_or_else(|| Error::Format(format!("{p}: no channels")))?;
            spec.ensure_same(&r.spec, "gt_cost")?;
            Some(CostMap::from_raster(r)?)
        }
        None => None,
    };
    Ok(Instance {
        id: entry.id.clone(),
        stack,
        path_map,
        path,
        start,
        goal,
        gt_cost,
    })
}

/// Instances of the named split, in manifest order.
pub fn load_split(manifest_path: &Path, manifest: &Manifest, ids: &[String]) -> Result<Vec<Instance>> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    ids.iter()
        .map(|id| {
            let e = manifest
                .entry(id)
                .ok_or_else(|| Error::Format(format!("unknown instance '{id}'")))?;
            load_instance(dir, e)
        })
        .collect()
}
