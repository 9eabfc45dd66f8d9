use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use terracost::geogrid::{read_raster, write_raster};
use terracost::ingest::{dem_to_points, read_dem_asc, read_points, read_semantic_mask};
use terracost::model::load_checkpoint;
use terracost::planner::{astar, write_path_csv, write_path_geojson, SearchProblem};
use terracost::raster::{rasterize_cloud, write_preview, RasterizeOptions};
use terracost::train::{self, Manifest, TrainConfig, MANIFEST_FILE};
use terracost::{CellIndex, CostMap, Error, FeatureStack, GeoPoint, GridSpec};

use crate::{CliError, EvalArgs, ExportArgs, MakeDatasetArgs, PlanArgs, RasterizeArgs, TrainArgs};

type CmdResult = Result<Value, CliError>;

/// Writes a command's result to stdout; `null` prints nothing.
pub fn emit(v: Value, pretty: bool) -> Result<(), CliError> {
    if v.is_null() {
        return Ok(());
    }
    let text = if pretty {
        serde_json::to_string_pretty(&v)
    } else {
        serde_json::to_string(&v)
    };
    println!("{}", text.map_err(|e| Error::Format(e.to_string()))?);
    Ok(())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

pub fn rasterize(a: &RasterizeArgs) -> CmdResult {
    let grid_flags = [a.origin.is_some(), a.cell_size.is_some(), a.width.is_some(), a.height.is_some()];
    if grid_flags.contains(&true) && grid_flags.contains(&false) {
        return Err(usage("--origin, --cell-size, --width and --height go together"));
    }
    if a.points.is_some() && !grid_flags[0] {
        return Err(usage("--origin, --cell-size, --width and --height are required with --points"));
    }
    let (cloud, dem_spec) = match (&a.points, &a.dem) {
        (Some(p), None) => (read_points(p)?, None),
        (None, Some(d)) => {
            let dem = read_dem_asc(d)?;
            (dem_to_points(&dem)?, Some(dem.grid_spec()?))
        }
        _ => return Err(usage("give exactly one of --points and --dem")),
    };
    let spec = match (a.origin, a.cell_size, a.width, a.height) {
        (Some((x, y)), Some(cs), Some(w), Some(h)) => GridSpec::new(x, y, cs, w, h)?,
        _ => dem_spec.ok_or_else(|| usage("--origin, --cell-size, --width and --height are required with --points"))?,
    };
    let mask = a.mask.as_ref().map(|m| read_semantic_mask(m, &spec)).transpose()?;
    let tile = rasterize_cloud(&cloud, &spec, mask.as_ref(), &RasterizeOptions { fill_iters: a.fill_iters })?;
    if tile.out_of_bounds > 0 {
        log::warn!("{} points fell outside the grid", tile.out_of_bounds);
    }
    ensure_parent(&a.out)?;
    write_raster(&a.out, &tile.stack.channels)?;
    if let Some(dir) = &a.preview {
        fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        for ch in &tile.stack.channels {
            write_preview(dir.join(format!("{}.pgm", ch.channel_name)), ch)?;
        }
    }
    Ok(json!({
        "out": a.out,
        "width": spec.width,
        "height": spec.height,
        "points": cloud.len(),
        "out_of_bounds": tile.out_of_bounds,
    }))
}

pub fn make_dataset(a: &MakeDatasetArgs) -> CmdResult {
    let fractions = a.split.unwrap_or(train::DEFAULT_SPLIT);
    let m = train::make_dataset(a.n, a.seed, a.size, &a.out, fractions)?;
    Ok(json!({
        "manifest": a.out.join(MANIFEST_FILE),
        "instances": m.instances.len(),
        "train": m.splits.train.len(),
        "val": m.splits.val.len(),
        "test": m.splits.test.len(),
    }))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config).map_err(|source| Error::Io {
        path: a.config.clone(),
        source,
    })?;
    let mut cfg = TrainConfig::from_json(&text)?;
    let base = a.config.parent().unwrap_or(Path::new(""));
    cfg.dataset = resolve(base, &cfg.dataset);
    cfg.checkpoint_dir = resolve(base, &cfg.checkpoint_dir);
    cfg.log_path = resolve(base, &cfg.log_path);
    let report = train::train(&cfg)?;
    let last = report.log.last().expect("at least one epoch");
    Ok(json!({
        "epochs": report.log.len(),
        "best_epoch": report.best_epoch,
        "train_loss": last.train_loss,
        "val_loss": last.val_loss,
        "skipped": report.log.iter().map(|e| e.skipped).sum::<usize>(),
        "checkpoint_dir": cfg.checkpoint_dir,
        "log": cfg.log_path,
    }))
}

fn parse_endpoint(text: &str, what: &str, geo: bool, spec: &GridSpec) -> Result<CellIndex, CliError> {
    let bad = || usage(format!("--{what} expects two comma-separated numbers, got '{text}'"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    if geo {
        let x: f64 = parts[0].parse().map_err(|_| bad())?;
        let y: f64 = parts[1].parse().map_err(|_| bad())?;
        return spec
            .geo_to_cell(GeoPoint::new(x, y))
            .map_err(|e| CliError::Core(Error::OutOfBounds(format!("{what} {x},{y}: {e}"))));
    }
    let row: usize = parts[0].parse().map_err(|_| bad())?;
    let col: usize = parts[1].parse().map_err(|_| bad())?;
    let c = CellIndex::new(row, col);
    if !spec.contains_cell(c) {
        return Err(Error::OutOfBounds(format!(
            "{what} cell {c} is outside the {}x{} grid",
            spec.height, spec.width
        ))
        .into());
    }
    Ok(c)
}

fn load_costmap(a: &PlanArgs) -> Result<CostMap, CliError> {
    if let Some(stack_path) = &a.stack {
        let ck = a.checkpoint.as_ref().ok_or_else(|| usage("--stack needs --checkpoint"))?;
        let model = load_checkpoint(ck)?;
        let stack = FeatureStack::from_rasters(read_raster(stack_path)?)?;
        return Ok(model.predict(&stack)?);
    }
    let path = a.costmap.as_ref().ok_or_else(|| usage("give --stack or --costmap"))?;
    let rasters = read_raster(path)?;
    if rasters.len() != 1 {
        return Err(Error::Format(format!("{}: costmap must have one channel, found {}", path.display(), rasters.len())).into());
    }
    Ok(CostMap::from_raster(&rasters[0])?)
}

pub fn plan(a: &PlanArgs) -> CmdResult {
    let cm = load_costmap(a)?;
    let start = parse_endpoint(&a.start, "start", a.geo, &cm.spec)?;
    let goal = parse_endpoint(&a.goal, "goal", a.geo, &cm.spec)?;
    if let Some(out) = &a.export_costmap {
        ensure_parent(out)?;
        if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("tbrz")) {
            write_raster(out, &[cm.to_raster()])?;
        } else {
            write_preview(out, &cm.to_raster())?;
        }
    }
    let mut problem = SearchProblem::new(start, goal);
    problem.block_threshold = a.block_threshold;
    let r = astar(&cm, &problem)?;
    if let Some(out) = &a.out_csv {
        ensure_parent(out)?;
        write_path_csv(out, &r.path)?;
    }
    if let Some(out) = &a.out_geojson {
        ensure_parent(out)?;
        write_path_geojson(out, &cm.spec, &r.path)?;
    }
    Ok(json!({
        "start": [start.row, start.col],
        "goal": [goal.row, goal.col],
        "cells": r.path.len(),
        "total_cost": r.total_cost,
        "expansions": r.expansions,
    }))
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let dir = if a.manifest.is_dir() {
        a.manifest.clone()
    } else {
        a.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    // Read first so a missing manifest reports its own path.
    Manifest::read(dir.join(MANIFEST_FILE))?;
    let model = load_checkpoint(&a.checkpoint)?;
    let mut template = SearchProblem::new(CellIndex::new(0, 0), CellIndex::new(0, 1));
    template.tau = a.tau;
    template.max_steps = a.max_steps;
    let m = train::evaluate(&model, &dir, &a.split, &template)?;
    Ok(serde_json::to_value(m).map_err(|e| Error::Format(e.to_string()))?)
}

pub fn export(a: &ExportArgs) -> CmdResult {
    let rasters = read_raster(&a.input)?;
    let mut written = Vec::new();
    match &a.channel {
        Some(name) => {
            let r = rasters
                .iter()
                .find(|r| &r.channel_name == name)
                .ok_or_else(|| Error::Format(format!("{}: no channel '{name}'", a.input.display())))?;
            ensure_parent(&a.out)?;
            write_preview(&a.out, r)?;
            written.push(a.out.clone());
        }
        None if rasters.len() == 1 => {
            ensure_parent(&a.out)?;
            write_preview(&a.out, &rasters[0])?;
            written.push(a.out.clone());
        }
        None => {
            fs::create_dir_all(&a.out).map_err(|source| Error::Io { path: a.out.clone(), source })?;
            for r in &rasters {
                let p = a.out.join(format!("{}.pgm", r.channel_name));
                write_preview(&p, r)?;
                written.push(p);
            }
        }
    }
    Ok(json!({ "written": written }))
}
