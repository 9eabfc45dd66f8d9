use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use terracost::geogrid::{read_raster, write_raster};
use terracost::ingest::{read_pgm, write_dem_asc, write_semantic_mask, ClassRaster, DemGrid};
use terracost::planner::read_path_csv;
use terracost::train::{read_log, Manifest};
use terracost::{CellIndex, CostMap, GridSpec, FeatureStack};

fn terracost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terracost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json {e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dem_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let (ncols, nrows) = (12, 10);
    let elevations = (0..nrows * ncols).map(|i| ((i % ncols) as f64 * 0.3).sin() + (i / ncols) as f64 * 0.1).collect();
    let dem = DemGrid {
        ncols,
        nrows,
        xllcorner: 100.0,
        yllcorner: 200.0,
        cellsize: 1.0,
        nodata_value: -9999.0,
        elevations,
    };
    let dem_path = dir.join("tile.asc");
    write_dem_asc(&dem_path, &dem).unwrap();
    let spec = dem.grid_spec().unwrap();
    let mask = ClassRaster::new(spec, (0..nrows * ncols).map(|i| (i % 5) as u8).collect()).unwrap();
    let mask_path = dir.join("mask.pgm");
    write_semantic_mask(&mask_path, &mask).unwrap();
    (dem_path, mask_path)
}

fn write_costmap(path: &Path, cm: &CostMap) {
    write_raster(path, &[cm.to_raster()]).unwrap();
}

#[test]
fn rasterize_dem_with_mask_and_previews() {
    let dir = tempfile::tempdir().unwrap();
    let (dem, mask) = write_dem_fixture(dir.path());
    let out = dir.path().join("stack.tbrz");
    let prev = dir.path().join("prev");
    let o = terracost(&["rasterize", "--dem", s(&dem), "--mask", s(&mask), "--out", s(&out), "--preview", s(&prev)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rasters = read_raster(&out).unwrap();
    let names: Vec<&str> = rasters.iter().map(|r| r.channel_name.as_str()).collect();
    assert_eq!(names, ["semantic", "height", "slope", "intensity"]);
    let fs = FeatureStack::from_rasters(rasters).unwrap();
    assert_eq!((fs.spec.width, fs.spec.height), (12, 10));
    for name in ["semantic", "height", "slope", "intensity"] {
        let g = read_pgm(prev.join(format!("{name}.pgm"))).unwrap();
        assert_eq!((g.width, g.height), (12, 10));
    }
}

#[test]
fn rasterize_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (dem, _) = write_dem_fixture(dir.path());
    let out = dir.path().join("x.tbrz");
    assert_eq!(code(&terracost(&["rasterize", "--points", s(&dem), "--dem", s(&dem), "--out", s(&out)])), 1);
    assert_eq!(code(&terracost(&["rasterize", "--out", s(&out)])), 1);
    assert_eq!(code(&terracost(&["rasterize", "--dem", s(&dem), "--out", s(&out), "--bogus"])), 1);
    // Points need an explicit grid.
    assert_eq!(code(&terracost(&["rasterize", "--points", s(&dem), "--out", s(&out)])), 1);
    assert_eq!(code(&terracost(&["frobnicate"])), 1);
}

#[test]
fn rasterize_bad_dem_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let dem = dir.path().join("bad.asc");
    fs::write(&dem, "ncols 3\nnrows 2\n1 2 3\n").unwrap();
    let o = terracost(&["rasterize", "--dem", s(&dem), "--out", s(&dir.path().join("o.tbrz"))]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn make_dataset_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = terracost(&["make-dataset", "--n", "10", "--seed", "3", "--size", "16", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::read(out.join("manifest.json")).unwrap();
    assert_eq!(m.instances.len(), 10);
    assert_eq!(stdout_json(&o)["instances"], 10);
    assert_eq!(code(&terracost(&["make-dataset", "--n", "2", "--size", "17", "--out", s(&out)])), 2);
}

#[test]
fn train_missing_manifest_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 1, "dataset": "nowhere", "checkpoint_dir": "ck", "log_path": "log.csv"}"#).unwrap();
    assert_eq!(code(&terracost(&["train", "--config", s(&cfg)])), 2);
    fs::write(&cfg, r#"{"epochs": 0, "dataset": "nowhere", "checkpoint_dir": "ck", "log_path": "log.csv"}"#).unwrap();
    assert_eq!(code(&terracost(&["train", "--config", s(&cfg)])), 2);
    fs::write(&cfg, "not json").unwrap();
    assert_eq!(code(&terracost(&["train", "--config", s(&cfg)])), 2);
}

const SMALL_MODEL: &str = r#"{"in_channels": 4, "stem_channels": [4, 8, 8, 8], "attention_kernel": 7, "c_min": 0.01, "seed": 5}"#;

fn train_run(dir: &Path, tag: &str) -> Output {
    let cfg = dir.join(format!("{tag}.json"));
    fs::write(
        &cfg,
        format!(
            r#"{{"epochs": 2, "seed": 5, "dataset": "ds", "checkpoint_dir": "{tag}_ck", "log_path": "{tag}_log.csv", "model": {SMALL_MODEL}}}"#
        ),
    )
    .unwrap();
    terracost(&["train", "--config", s(&cfg)])
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert_eq!(code(&terracost(&["make-dataset", "--n", "10", "--seed", "8", "--size", "16", "--out", s(&ds)])), 0);

    let a = train_run(dir.path(), "a");
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&train_run(dir.path(), "b")), 0);
    let log_a = fs::read_to_string(dir.path().join("a_log.csv")).unwrap();
    assert_eq!(log_a, fs::read_to_string(dir.path().join("b_log.csv")).unwrap());
    assert_eq!(stdout_json(&a)["epochs"], 2);

    let last = dir.path().join("a_ck/last.tbck");
    let o = terracost(&["eval", "--checkpoint", s(&last), "--manifest", s(&ds.join("manifest.json")), "--split", "test"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    for k in ["loss", "chamfer", "success", "cost_ratio"] {
        assert!(v[k].is_number(), "missing {k} in {v}");
    }

    // Validation loss of the last checkpoint matches the log's last row.
    let o = terracost(&["eval", "--checkpoint", s(&last), "--manifest", s(&ds), "--split", "val"]);
    let logged = read_log(dir.path().join("a_log.csv")).unwrap().last().unwrap().val_loss;
    let printed = stdout_json(&o)["loss"].as_f64().unwrap();
    assert!((printed - logged).abs() < 1e-6, "{printed} vs {logged}");

    let o = terracost(&["eval", "--checkpoint", s(&last), "--manifest", s(&ds), "--split", "holdout"]);
    assert_eq!(code(&o), 1);
    let o = terracost(&["eval", "--checkpoint", s(&dir.path().join("none.tbck")), "--manifest", s(&ds)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plan_on_uniform_costmap() {
    let dir = tempfile::tempdir().unwrap();
    let cm_path = dir.path().join("cm.tbrz");
    write_costmap(&cm_path, &CostMap::uniform(GridSpec::unit(10, 10), 0.5).unwrap());
    let csv = dir.path().join("out/path.csv");
    let gj = dir.path().join("out/path.geojson");
    let pgm = dir.path().join("out/cost.pgm");
    let o = terracost(&[
        "plan", "--costmap", s(&cm_path), "--start", "2,0", "--goal", "2,9", "--out-csv", s(&csv), "--out-geojson", s(&gj),
        "--export-costmap", s(&pgm),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = read_path_csv(&csv).unwrap();
    assert_eq!(path, (0..10).map(|c| CellIndex::new(2, c)).collect::<Vec<_>>());
    let geo: Value = serde_json::from_str(&fs::read_to_string(&gj).unwrap()).unwrap();
    assert_eq!(geo["geometry"]["coordinates"].as_array().unwrap().len(), path.len());
    assert_eq!(read_pgm(&pgm).unwrap().width, 10);
    let v = stdout_json(&o);
    assert_eq!(v["cells"], 10);
    assert!((v["total_cost"].as_f64().unwrap() - 4.5).abs() < 1e-9);
}

#[test]
fn plan_geo_endpoints_and_stack_input() {
    let dir = tempfile::tempdir().unwrap();
    let (dem, mask) = write_dem_fixture(dir.path());
    let stack = dir.path().join("stack.tbrz");
    assert_eq!(code(&terracost(&["rasterize", "--dem", s(&dem), "--mask", s(&mask), "--out", s(&stack)])), 0);
    // A fresh checkpoint is enough to exercise the model path.
    let model = terracost::model::Model::<f32>::init(terracost::model::ModelConfig::with_seed(1)).unwrap();
    let ck = dir.path().join("m.tbck");
    terracost::model::save_checkpoint(&model, &ck).unwrap();
    let out_cm = dir.path().join("pred.tbrz");
    let o = terracost(&[
        "plan", "--stack", s(&stack), "--checkpoint", s(&ck), "--geo", "--start", "100.5,209.5", "--goal", "111.5,200.5",
        "--export-costmap", s(&out_cm),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["start"], serde_json::json!([0, 0]));
    assert_eq!(v["goal"], serde_json::json!([9, 11]));
    assert_eq!(read_raster(&out_cm).unwrap().len(), 1);
    assert_eq!(code(&terracost(&["plan", "--stack", s(&stack), "--start", "0,0", "--goal", "1,1"])), 1);
}

#[test]
fn plan_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cm_path = dir.path().join("cm.tbrz");
    let mut cm = CostMap::uniform(GridSpec::unit(6, 6), 0.2).unwrap();
    for r in 0..6 {
        cm.values[r * 6 + 3] = 1.0;
    }
    write_costmap(&cm_path, &cm);
    let o = terracost(&["plan", "--costmap", s(&cm_path), "--start", "40,1", "--goal", "0,5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("40,1"));
    let o = terracost(&["plan", "--costmap", s(&cm_path), "--start", "0,0", "--goal", "0,5", "--block-threshold", "0.999"]);
    assert_eq!(code(&o), 3);
    assert!(o.stdout.is_empty());
    let o = terracost(&["plan", "--costmap", s(&cm_path), "--start", "0,0", "--goal", "0,5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&terracost(&["plan", "--costmap", s(&cm_path), "--start", "a,b", "--goal", "0,5"])), 1);
    let o = terracost(&["plan", "--costmap", s(&cm_path), "--geo", "--start", "-3,2", "--goal", "5.5,0.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("-3,2"));
}

#[test]
fn export_channels() {
    let dir = tempfile::tempdir().unwrap();
    let (dem, mask) = write_dem_fixture(dir.path());
    let stack = dir.path().join("stack.tbrz");
    assert_eq!(code(&terracost(&["rasterize", "--dem", s(&dem), "--mask", s(&mask), "--out", s(&stack)])), 0);
    let one = dir.path().join("slope.pgm");
    assert_eq!(code(&terracost(&["export", "--input", s(&stack), "--channel", "slope", "--out", s(&one)])), 0);
    assert_eq!(read_pgm(&one).unwrap().height, 10);
    let all = dir.path().join("all");
    let o = terracost(&["export", "--input", s(&stack), "--out", s(&all)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["written"].as_array().unwrap().len(), 4);
    let o = terracost(&["export", "--input", s(&stack), "--channel", "nope", "--out", s(&one)]);
    assert_eq!(code(&o), 2);
}
