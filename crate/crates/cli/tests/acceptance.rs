//! Acceptance suite. Runs every check in order, prints one PASS/FAIL line per
//! check and exits non-zero if any failed.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terracost::autodiff::{compare_gradients, GradCheckReport, Tape, Tensor};
use terracost::geogrid::{read_raster, write_raster, FEATURE_CHANNELS};
use terracost::ingest::{
    dem_to_points, read_dem_asc, read_points, read_semantic_mask, write_dem_asc, write_points_bin, write_semantic_mask,
    ClassRaster, DemGrid, Point, PointCloud, CLASS_NODATA,
};
use terracost::model::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, stack_tensor, Model, ModelConfig};
use terracost::planner::{astar, diff_astar_forward, dijkstra, path_loss, SearchProblem};
use terracost::raster::{build_feature_stack, rasterize_cloud, slope_map, RasterizeOptions};
use terracost::train::{self, load_split, make_dataset, Instance, Manifest, TrainConfig, MANIFEST_FILE};
use terracost::{CellIndex, CostMap, FeatureStack, GridSpec, PathMap, Raster, C_MIN};

// Pinned tolerances and budgets.
const PLANNER_TOL: f64 = 1e-6;
const PLANNER_BUDGET: Duration = Duration::from_secs(10);
const ZERO_TAU: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
const GRAD_EPS: f64 = 1e-6;
const GRAD_BUDGET: Duration = Duration::from_secs(300);
const LOSS_RATIO: f64 = 0.5;
const MIN_SEPARATION: f64 = 0.2;
const RASTER_TOL: f64 = 1e-6;
const SLOPE_TOL_DEG: f64 = 0.01;

// Learning-signal run.
const LEARN_INSTANCES: usize = 200;
const LEARN_SIZE: usize = 64;
const LEARN_EPOCHS: usize = 100;
const LEARN_DATA_SEED: u64 = 2024;
const LEARN_SEED: u64 = 11;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_costmap(rng: &mut ChaCha8Rng, w: usize, h: usize) -> CostMap {
    let values = (0..w * h).map(|_| rng.random_range(C_MIN..=1.0)).collect();
    CostMap::new(GridSpec::unit(w, h), values).unwrap()
}

fn random_cell(rng: &mut ChaCha8Rng, spec: &GridSpec) -> CellIndex {
    CellIndex::new(rng.random_range(0..spec.height), rng.random_range(0..spec.width))
}

fn endpoints(rng: &mut ChaCha8Rng, spec: &GridSpec) -> (CellIndex, CellIndex) {
    let s = random_cell(rng, spec);
    loop {
        let g = random_cell(rng, spec);
        if g != s {
            return (s, g);
        }
    }
}

fn planner_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let cm = random_costmap(&mut rng, 32, 32);
        let (s, g) = endpoints(&mut rng, &cm.spec);
        let r = astar(&cm, &SearchProblem::new(s, g)).unwrap();
        let d = dijkstra(&cm, s).unwrap();
        worst = worst.max((r.total_cost - d[cm.spec.index(g)]).abs());
    }
    let el = t.elapsed();
    outcome(
        worst <= PLANNER_TOL && el < PLANNER_BUDGET,
        format!("200 maps 32x32, max |astar - dijkstra| = {worst:.2e} (tol {PLANNER_TOL:e}), {el:.2?} (budget {PLANNER_BUDGET:?})"),
    )
}

fn zero_temperature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = GridSpec::unit(16, 16);
    let mut same = 0;
    for _ in 0..20 {
        let cm = random_costmap(&mut rng, 16, 16);
        let (s, g) = endpoints(&mut rng, &spec);
        let p = SearchProblem::new(s, g).with_tau(ZERO_TAU);
        let classic = astar(&cm, &p).unwrap();
        let mut t = Tape::<f64>::new();
        let costs: Vec<f64> = cm.values.iter().map(|&v| f64::from(v)).collect();
        let c = t.param(Tensor::new([1, 1, 16, 16], costs).unwrap());
        let diff = diff_astar_forward(&mut t, c, &spec, &p).unwrap();
        same += usize::from(diff.path == classic.path);
    }
    outcome(same == 20, format!("{same}/20 paths identical at tau {ZERO_TAU:e}"))
}

fn random_stack(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureStack {
    let spec = GridSpec::unit(w, h);
    let channels = FEATURE_CHANNELS.map(|name| {
        let v = (0..w * h).map(|_| rng.random_range(0.0..=1.0)).collect();
        Raster::new(spec.clone(), name, v).unwrap()
    });
    FeatureStack::new(spec, channels).unwrap()
}

fn flat_params(m: &Model<f64>) -> Vec<f64> {
    m.params.iter().flat_map(|(_, t)| t.data.iter().copied()).collect()
}

fn with_flat_params(m: &Model<f64>, flat: &[f64]) -> Model<f64> {
    let mut out = m.clone();
    let mut k = 0;
    for (_, t) in &mut out.params {
        let n = t.data.len();
        t.data.copy_from_slice(&flat[k..k + n]);
        k += n;
    }
    out
}

fn predict_f64(m: &Model<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let out = m.forward_on(&mut t, xv, false).unwrap();
    t.value(out.costmap).data.clone()
}

fn l1(hist: &[f64], target: &[f32]) -> f64 {
    hist.iter().zip(target).map(|(a, &b)| (a - f64::from(b)).abs()).sum::<f64>() / hist.len() as f64
}

/// Parameter and costmap gradient checks for one seed; decisions of the
/// search are frozen at the recorded trace for the finite differences.
fn gradient_seed(seed: u64) -> (GradCheckReport, GradCheckReport, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let spec = GridSpec::unit(8, 8);
    let model = Model::<f64>::init(ModelConfig::with_seed(seed)).unwrap();
    let stack = random_stack(&mut rng, 8, 8);
    let x = stack_tensor::<f64>(&stack).unwrap();
    let s = CellIndex::new(0, rng.random_range(0..8));
    let g = CellIndex::new(7, rng.random_range(0..8));
    let p = SearchProblem::new(s, g).with_tau(rng.random_range(0.5..4.0));
    let mut cells = vec![s];
    let mut cur = s;
    while cur != g {
        let col = if cur.col < g.col { cur.col + 1 } else if cur.col > g.col { cur.col - 1 } else { cur.col };
        cur = CellIndex::new((cur.row + 1).min(g.row), col);
        cells.push(cur);
    }
    let target = PathMap::from_cells(spec.clone(), &cells).unwrap();
    let target_f = target.to_f32();

    let mut t = Tape::new();
    let xv = t.constant(x.clone());
    let fwd = model.forward_on(&mut t, xv, true).unwrap();
    let r = diff_astar_forward(&mut t, fwd.costmap, &spec, &p).unwrap();
    let loss = path_loss(&mut t, r.history, &target).unwrap();
    t.backward(loss).unwrap();
    let analytic: Vec<f64> = fwd
        .params
        .iter()
        .zip(&model.params)
        .flat_map(|(&v, (_, pt))| t.grad(v).map(|g| g.data.clone()).unwrap_or_else(|| vec![0.0; pt.numel()]))
        .collect();
    let theta = flat_params(&model);
    let mut coords = Vec::new();
    let mut offset = 0;
    for (_, pt) in &model.params {
        let n = pt.numel();
        if n <= 64 {
            coords.extend(offset..offset + n);
        } else {
            coords.extend((0..64).map(|_| offset + rng.random_range(0..n)));
        }
        offset += n;
    }
    let trace = r.trace.clone();
    let f = |th: &[f64]| l1(&trace.replay_history(&predict_f64(&with_flat_params(&model, th), &x)), &target_f);
    let params = compare_gradients(&analytic, &theta, f, GRAD_EPS, GRAD_TOL, Some(&coords));

    let costs = predict_f64(&model, &x);
    let mut t = Tape::new();
    let c = t.param(Tensor::new([1, 1, 8, 8], costs.clone()).unwrap());
    let r = diff_astar_forward(&mut t, c, &spec, &p).unwrap();
    let loss = path_loss(&mut t, r.history, &target).unwrap();
    t.backward(loss).unwrap();
    let analytic = t.grad(c).unwrap().data.clone();
    let f = |cs: &[f64]| l1(&r.trace.replay_history(cs), &target_f);
    let costmap = compare_gradients(&analytic, &costs, f, GRAD_EPS, GRAD_TOL, None);
    (params, costmap, coords.len())
}

fn end_to_end_gradients() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    let (mut pmax, mut cmax) = (0.0f64, 0.0f64);
    let (mut unreliable, mut checked, mut sampled) = (0, 0, 0);
    for seed in 0..5 {
        let (p, c, n) = gradient_seed(seed);
        pmax = pmax.max(p.max_rel_error);
        cmax = cmax.max(c.max_rel_error);
        unreliable += p.unreliable.len() + c.unreliable.len();
        checked += p.checked + c.checked;
        sampled += n + 64;
        parts.push(p.checked > 0 && c.checked == 64 - c.unreliable.len());
    }
    let el = t.elapsed();
    // Coordinates on a ReLU or max-pool kink have no derivative to compare.
    let pass = pmax < GRAD_TOL && cmax < GRAD_TOL && el < GRAD_BUDGET && parts.iter().all(|&b| b) && unreliable * 20 <= sampled;
    outcome(
        pass,
        format!(
            "5 seeds 8x8 f64, max rel err params {pmax:.2e} costmap {cmax:.2e} (tol {GRAD_TOL:e}), {checked} coords checked, {unreliable} on kinks, {el:.2?} (budget {GRAD_BUDGET:?})"
        ),
    )
}

fn is_obstacle(v: f32) -> bool {
    (v * 4.0).round() == 3.0
}

/// Mean model cost over obstacle cells and over expert-path cells.
fn separation(model: &Model<f32>, set: &[Instance]) -> (f64, f64) {
    let (mut ob, mut nob, mut pa, mut npa) = (0.0, 0usize, 0.0, 0usize);
    for inst in set {
        let cm = model.predict(&inst.stack).unwrap();
        for (i, &c) in inst.stack.channels[0].values.iter().enumerate() {
            if is_obstacle(c) {
                ob += f64::from(cm.values[i]);
                nob += 1;
            }
        }
        for &c in &inst.path {
            pa += f64::from(cm.get(c));
            npa += 1;
        }
    }
    (ob / nob.max(1) as f64, pa / npa.max(1) as f64)
}

fn learning_signal(work: &Path) -> (Outcome, Model<f32>) {
    let data = work.join("learn");
    let t = Instant::now();
    make_dataset(LEARN_INSTANCES, LEARN_DATA_SEED, LEARN_SIZE, &data, train::DEFAULT_SPLIT).unwrap();
    let mut cfg = TrainConfig::new(&data, work.join("learn_ck"), work.join("learn_log.csv"));
    cfg.epochs = LEARN_EPOCHS;
    cfg.seed = LEARN_SEED;
    // Everything else at the library defaults: lr 1e-3, batch 1, admissible heuristic.
    let report = train::train(&cfg).unwrap();
    let el = t.elapsed();
    let first = report.log[0].val_loss;
    let last = report.log.last().unwrap().val_loss;
    let best = &report.log[report.best_epoch - 1];
    let mpath = data.join(MANIFEST_FILE);
    let m = Manifest::read(&mpath).unwrap();
    let val = load_split(&mpath, &m, &m.splits.val).unwrap();
    let (ob, pa) = separation(&report.model, &val);
    let ratio = last / first;
    let pass = ratio <= LOSS_RATIO && ob - pa >= MIN_SEPARATION;
    let o = outcome(
        pass,
        format!(
            "val loss epoch 1 {first:.4}, final {last:.4} (ratio {ratio:.3}, need <= {LOSS_RATIO}), best {:.4} at epoch {}; \
             final model obstacle cost {ob:.3} vs path cost {pa:.3} (gap {:.3}, need >= {MIN_SEPARATION}), {el:.2?}",
            best.val_loss,
            best.epoch,
            ob - pa
        ),
    );
    (o, report.model)
}

fn rasterization_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = GridSpec::new(10.0, 30.0, 0.5, 40, 30).unwrap();
    let points: Vec<Point> = (0..10_000)
        .map(|_| {
            let x = rng.random_range(spec.origin_x..spec.max_x());
            let y = rng.random_range(spec.min_y()..spec.origin_y);
            let p = Point::new(x, y, rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0));
            if rng.random_bool(0.8) {
                p.with_class(rng.random_range(0..=4))
            } else {
                p
            }
        })
        .collect();
    let cloud = PointCloud::new(points.clone()).unwrap();
    let tile = rasterize_cloud(&cloud, &spec, None, &RasterizeOptions::default()).unwrap();
    let (mut zerr, mut ierr, mut class_mismatch) = (0.0f64, 0.0f64, 0);
    for r in 0..spec.height {
        for c in 0..spec.width {
            let x0 = spec.origin_x + c as f64 * spec.cell_size;
            let y1 = spec.origin_y - r as f64 * spec.cell_size;
            let inside: Vec<&Point> = points
                .iter()
                .filter(|p| p.x >= x0 && p.x < x0 + spec.cell_size && p.y <= y1 && p.y > y1 - spec.cell_size)
                .collect();
            let i = r * spec.width + c;
            let (hz, hi) = (tile.height.values[i], tile.intensity.values[i]);
            if inside.is_empty() {
                zerr = zerr.max(if hz.is_nan() { 0.0 } else { f64::INFINITY });
                ierr = ierr.max(if hi.is_nan() { 0.0 } else { f64::INFINITY });
            } else {
                let n = inside.len() as f64;
                let mz = inside.iter().map(|p| p.z).sum::<f64>() / n;
                let mi = inside.iter().map(|p| p.intensity).sum::<f64>() / n;
                zerr = zerr.max((f64::from(hz) - mz).abs() / mz.abs().max(1.0));
                ierr = ierr.max((f64::from(hi) - mi).abs() / mi.abs().max(1.0));
            }
            let want = inside.iter().filter_map(|p| p.class_id).max().unwrap_or(CLASS_NODATA);
            class_mismatch += usize::from(tile.semantic.values[i] != want);
        }
    }

    // Analytic plane: one point per cell center.
    let plane = GridSpec::new(0.0, 20.0, 0.5, 40, 40).unwrap();
    let tan = 10f64.to_radians().tan();
    let pts = (0..plane.len())
        .map(|i| {
            let g = plane.cell_to_geo(plane.cell_at(i)).unwrap();
            Point::new(g.x, g.y, g.x * tan, 0.5)
        })
        .collect();
    let t = rasterize_cloud(&PointCloud::new(pts).unwrap(), &plane, None, &RasterizeOptions::default()).unwrap();
    let mut slope_err = 0.0f64;
    for r in 1..plane.height - 1 {
        for c in 1..plane.width - 1 {
            slope_err = slope_err.max((f64::from(t.slope.values[r * plane.width + c]) - 10.0).abs());
        }
    }
    outcome(
        zerr <= RASTER_TOL && ierr <= RASTER_TOL && class_mismatch == 0 && slope_err <= SLOPE_TOL_DEG,
        format!(
            "10^4 points: height err {zerr:.2e}, intensity err {ierr:.2e} (tol {RASTER_TOL:e}), {class_mismatch} semantic mismatches; \
             plane slope err {slope_err:.2e} deg (tol {SLOPE_TOL_DEG})"
        ),
    )
}

fn terrain_z(x: f64, y: f64) -> f64 {
    2.0 * (x / 3.0).sin() * (y / 4.0).cos() + 0.08 * x + 0.6 * (2.7 * x).sin() * (2.3 * y).cos()
}

fn terrain_intensity(x: f64, y: f64) -> f64 {
    0.5 + 0.4 * (x / 2.0 + y / 5.0).sin()
}

fn mean_abs_diff(a: &CostMap, b: &CostMap) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| f64::from((x - y).abs())).sum::<f64>() / a.values.len() as f64
}

fn dem_fidelity(model: &Model<f32>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let side = 32.0;
    let spec = GridSpec::new(0.0, side, 0.5, 64, 64).unwrap();
    let classes = (0..spec.len())
        .map(|i| {
            let g = spec.cell_to_geo(spec.cell_at(i)).unwrap();
            let v = terrain_z(g.x, g.y);
            if v > 2.2 {
                3
            } else if v > 1.0 {
                2
            } else if v > -0.5 {
                1
            } else {
                0
            }
        })
        .collect();
    let mask = ClassRaster::new(spec.clone(), classes).unwrap();

    let sample = |f: &dyn Fn(f64, f64) -> f64, name: &str| {
        let v = (0..spec.len())
            .map(|i| {
                let g = spec.cell_to_geo(spec.cell_at(i)).unwrap();
                f(g.x, g.y) as f32
            })
            .collect();
        Raster::new(spec.clone(), name, v).unwrap()
    };
    let height = sample(&terrain_z, "height");
    let intensity = sample(&terrain_intensity, "intensity");
    let reference = build_feature_stack(&mask, &height, &slope_map(&height), &intensity).unwrap();

    let opts = RasterizeOptions { fill_iters: 16 };
    let dense: Vec<Point> = (0..(4.0 * side * side) as usize)
        .map(|_| {
            let x = rng.random_range(0.0..side);
            let y = rng.random_range(0.0..side);
            Point::new(x, y, terrain_z(x, y), terrain_intensity(x, y))
        })
        .collect();
    let dense = rasterize_cloud(&PointCloud::new(dense).unwrap(), &spec, Some(&mask), &opts).unwrap();

    let n = side as usize;
    let dem = DemGrid {
        ncols: n,
        nrows: n,
        xllcorner: 0.0,
        yllcorner: 0.0,
        cellsize: 1.0,
        nodata_value: -9999.0,
        elevations: (0..n * n)
            .map(|i| terrain_z((i % n) as f64 + 0.5, side - (i / n) as f64 - 0.5))
            .collect(),
    };
    let coarse = rasterize_cloud(&dem_to_points(&dem).unwrap(), &spec, Some(&mask), &opts).unwrap();

    let base = model.predict(&reference).unwrap();
    let d_dense = mean_abs_diff(&base, &model.predict(&dense.stack).unwrap());
    let d_coarse = mean_abs_diff(&base, &model.predict(&coarse.stack).unwrap());
    outcome(
        d_coarse > d_dense,
        format!("costmap MAD vs reference: dense 4 pts/m^2 {d_dense:.4}, 1 pt/m^2 DEM {d_coarse:.4} (need coarse > dense)"),
    )
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn format_round_trips(work: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = work.join("formats");
    fs::create_dir_all(&dir).unwrap();
    let mut failures = Vec::new();
    for trial in 0..20 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let spec = GridSpec::new(rng.random_range(-1e5..1e5), rng.random_range(-1e5..1e5), rng.random_range(0.1..5.0), w, h).unwrap();

        let rasters: Vec<Raster> = (0..rng.random_range(1..5))
            .map(|k| {
                // TBRZ marks nodata as NaN; there is no header field for it.
                let v = (0..w * h)
                    .map(|_| if rng.random_bool(0.1) { f32::NAN } else { rng.random_range(-1e3f32..1e3) })
                    .collect();
                Raster::new(spec.clone(), format!("ch{k}"), v).unwrap()
            })
            .collect();
        let p = dir.join("r.tbrz");
        write_raster(&p, &rasters).unwrap();
        if read_raster(&p).unwrap() != rasters {
            failures.push(format!("TBRZ trial {trial}"));
        }

        let mut model = Model::<f32>::init(ModelConfig {
            stem_channels: [4, 8, 8, 8],
            ..ModelConfig::with_seed(trial)
        })
        .unwrap();
        for (_, t) in &mut model.params {
            t.data.iter_mut().for_each(|v| *v += rng.random_range(-1.0f32..1.0));
        }
        let p = dir.join("m.tbck");
        save_checkpoint(&model, &p).unwrap();
        let bytes = encode_checkpoint(&model).unwrap();
        if load_checkpoint(&p).unwrap() != model || decode_checkpoint(&bytes).unwrap() != model {
            failures.push(format!("TBCK trial {trial}"));
        }

        // TBPT stores classes for all points or none.
        let classed = trial % 2 == 0;
        let pts = (0..rng.random_range(1..500))
            .map(|_| {
                // TBPT stores f32 coordinates.
                let mut v = [0.0; 4];
                v.iter_mut().for_each(|x| *x = f64::from(rng.random_range(-1e4f32..1e4)));
                let p = Point::new(v[0], v[1], v[2], v[3].abs());
                if classed {
                    p.with_class(rng.random_range(0..=4))
                } else {
                    p
                }
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let p = dir.join("p.tbpt");
        write_points_bin(&p, &cloud).unwrap();
        if read_points(&p).unwrap() != cloud {
            failures.push(format!("TBPT trial {trial}"));
        }

        let mask = ClassRaster::new(
            spec.clone(),
            (0..w * h).map(|_| if rng.random_bool(0.1) { CLASS_NODATA } else { rng.random_range(0..=4) }).collect(),
        )
        .unwrap();
        let p = dir.join("m.pgm");
        write_semantic_mask(&p, &mask).unwrap();
        if read_semantic_mask(&p, &spec).unwrap() != mask {
            failures.push(format!("PGM trial {trial}"));
        }

        let nodata = if trial % 2 == 0 { f64::NAN } else { -9999.0 };
        let dem = DemGrid {
            ncols: w,
            nrows: h,
            xllcorner: spec.origin_x,
            yllcorner: spec.min_y(),
            cellsize: spec.cell_size,
            nodata_value: nodata,
            elevations: (0..w * h)
                .map(|_| if rng.random_bool(0.1) { nodata } else { rng.random_range(-500.0..9000.0) })
                .collect(),
        };
        let p = dir.join("d.asc");
        write_dem_asc(&p, &dem).unwrap();
        let back = read_dem_asc(&p).unwrap();
        let header = (back.ncols, back.nrows) == (dem.ncols, dem.nrows)
            && bits_eq(
                &[back.xllcorner, back.yllcorner, back.cellsize, back.nodata_value],
                &[dem.xllcorner, dem.yllcorner, dem.cellsize, dem.nodata_value],
            );
        if !header || !bits_eq(&back.elevations, &dem.elevations) {
            failures.push(format!("ASC trial {trial}"));
        }
    }
    let detail = if failures.is_empty() {
        "20 randomized payloads each for TBRZ, TBCK, TBPT, PGM mask and ASC, NaN nodata included: all exact".to_string()
    } else {
        format!("mismatches: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let o = Command::new(env!("CARGO_BIN_EXE_terracost")).args(args).output().unwrap();
    assert!(o.status.success(), "terracost {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

fn pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let data = dir.join("data");
    run_cli(&["make-dataset", "--n", "20", "--seed", "5", "--size", "32", "--out", data.to_str().unwrap()]);
    let cfg = serde_json::json!({
        "epochs": 5,
        "seed": 5,
        "dataset": "data",
        "checkpoint_dir": "ck",
        "log_path": "metrics.csv",
    });
    let cfg_path = dir.join("train.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    run_cli(&["train", "--config", cfg_path.to_str().unwrap()]);
    let eval = run_cli(&[
        "eval",
        "--checkpoint",
        dir.join("ck").join(train::BEST_CHECKPOINT).to_str().unwrap(),
        "--manifest",
        data.to_str().unwrap(),
    ]);
    (fs::read(dir.join("metrics.csv")).unwrap(), eval)
}

fn determinism(work: &Path) -> Outcome {
    let a = work.join("run_a");
    let b = work.join("run_b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let (log_a, eval_a) = pipeline(&a);
    let (log_b, eval_b) = pipeline(&b);
    let rows = String::from_utf8_lossy(&log_a).lines().count() - 1;
    outcome(
        log_a == log_b && eval_a == eval_b && rows == 5,
        format!(
            "metrics CSV identical: {}, eval metrics identical: {}, {rows} epochs logged",
            log_a == log_b,
            eval_a == eval_b
        ),
    )
}

fn report(id: usize, name: &str, o: &Outcome) -> bool {
    println!("[{}] {id}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() -> ExitCode {
    // Honour `cargo test -- --list` and name filters loosely: this target has one suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let work = tempfile::tempdir().unwrap();
    let mut ok = true;
    ok &= report(1, "planner optimality", &planner_optimality());
    ok &= report(2, "zero-temperature consistency", &zero_temperature());
    ok &= report(3, "end-to-end gradients", &end_to_end_gradients());
    let (learn, model) = learning_signal(work.path());
    ok &= report(4, "learning signal", &learn);
    ok &= report(5, "rasterization oracles", &rasterization_oracles());
    ok &= report(6, "DEM fidelity", &dem_fidelity(&model));
    ok &= report(7, "format round trips", &format_round_trips(work.path()));
    ok &= report(8, "determinism", &determinism(work.path()));
    println!("acceptance: {}", if ok { "all passed" } else { "FAILED" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
