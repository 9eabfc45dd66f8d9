use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::noise::fractal_noise;
use crate::error::{Error, Result};
use crate::geogrid::{CellIndex, CostMap, FeatureStack, GeoPoint, GridSpec, Raster, Trajectory, C_MIN};
use crate::ingest::{ClassRaster, TerrainClass};
use crate::planner::{astar, SearchProblem, DEFAULT_BLOCK_THRESHOLD};
use crate::raster::{build_feature_stack, slope_map};

/// Attempts at drawing a connected start/goal pair before giving up.
pub const SCENARIO_ATTEMPTS: usize = 20;

/// Knobs of the synthetic terrain generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    /// Height range of the terrain in meters; 0 gives a flat tile.
    pub relief_m: f64,
    pub octaves: usize,
    /// Share of cells turned into each class. Water fills the lowest basins,
    /// obstacles and rough ground form blobs, vegetation forms bands.
    pub water_fraction: f64,
    pub obstacle_fraction: f64,
    pub rough_fraction: f64,
    pub vegetation_fraction: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            relief_m: 6.0,
            octaves: 4,
            water_fraction: 0.08,
            obstacle_fraction: 0.08,
            rough_fraction: 0.08,
            vegetation_fraction: 0.15,
        }
    }
}

impl ScenarioParams {
    /// Flat, fully traversable terrain.
    pub fn flat() -> Self {
        ScenarioParams {
            relief_m: 0.0,
            octaves: 1,
            water_fraction: 0.0,
            obstacle_fraction: 0.0,
            rough_fraction: 0.0,
            vegetation_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub stack: FeatureStack,
    /// Hidden traversal cost the expert optimizes.
    pub gt_cost: Raster,
    pub classes: ClassRaster,
    pub height: Raster,
    pub expert: Trajectory,
    /// Expert path as cells, start to goal.
    pub path: Vec<CellIndex>,
}

impl Scenario {
    pub fn start(&self) -> CellIndex {
        self.path[0]
    }

    pub fn goal(&self) -> CellIndex {
        *self.path.last().expect("non-empty path")
    }
}

/// Cost the expert sees: `0.1 + 0.225 * class + 0.5 * min(slope / 30, 1)`,
/// clamped to `[C_MIN, 1]`.
pub fn ground_truth_cost(class: u8, slope_deg: f32) -> f32 {
    let s = (slope_deg / 30.0).clamp(0.0, 1.0);
    (0.1 + 0.225 * f32::from(class) + 0.5 * s).clamp(C_MIN, 1.0)
}

/// Value at quantile `q` of `v` (0 = minimum).
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let i = ((s.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    s[i]
}

pub fn generate_scenario(seed: u64, size: usize) -> Result<Scenario> {
    generate_scenario_with(seed, size, &ScenarioParams::default())
}

pub fn generate_scenario_with(seed: u64, size: usize, params: &ScenarioParams) -> Result<Scenario> {
    if !(16..=128).contains(&size) || size % 2 != 0 {
        return Err(Error::Config(format!("scenario size must be even and in [16, 128], got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GridSpec::unit(size, size);
    let n = size * size;
    let period = (size as f64 / 3.0).max(8.0);

    let terrain = fractal_noise(&mut rng, size, size, period, params.octaves, 0.5);
    let blobs = fractal_noise(&mut rng, size, size, period / 2.0, 2, 0.5);
    let rough = fractal_noise(&mut rng, size, size, period / 2.0, 2, 0.5);
    let bands = fractal_noise(&mut rng, size, size, period, 2, 0.4);
    let grain = fractal_noise(&mut rng, size, size, 2.0, 1, 0.5);

    let heights: Vec<f32> = terrain.iter().map(|t| (t * params.relief_m) as f32).collect();
    let height = Raster::new(spec.clone(), "height", heights)?;
    let slope = slope_map(&height);

    let water_level = quantile(&terrain, params.water_fraction);
    let blob_level = quantile(&blobs, 1.0 - params.obstacle_fraction);
    let rough_level = quantile(&rough, 1.0 - params.rough_fraction);
    let band_dist: Vec<f64> = bands.iter().map(|b| (b - 0.5).abs()).collect();
    let band_width = quantile(&band_dist, params.vegetation_fraction);
    let classes: Vec<u8> = (0..n)
        .map(|i| {
            let class = if params.water_fraction > 0.0 && terrain[i] <= water_level {
                TerrainClass::Water
            } else if params.obstacle_fraction > 0.0 && blobs[i] >= blob_level {
                TerrainClass::Obstacle
            } else if params.rough_fraction > 0.0 && rough[i] >= rough_level {
                TerrainClass::NonTraversable
            } else if params.vegetation_fraction > 0.0 && band_dist[i] <= band_width {
                TerrainClass::Vegetation
            } else {
                TerrainClass::Traversable
            };
            class as u8
        })
        .collect();
    let classes = ClassRaster::new(spec.clone(), classes)?;

    const BASE_INTENSITY: [f64; 5] = [0.55, 0.35, 0.25, 0.75, 0.05];
    let intensity: Vec<f32> = (0..n)
        .map(|i| (BASE_INTENSITY[classes.values[i] as usize] + 0.15 * (grain[i] - 0.5)) as f32)
        .collect();
    let intensity = Raster::new(spec.clone(), "intensity", intensity)?;
    let stack = build_feature_stack(&classes, &height, &slope, &intensity)?;

    let gt: Vec<f32> = (0..n).map(|i| ground_truth_cost(classes.values[i], slope.values[i])).collect();
    let gt_cost = Raster::new(spec.clone(), "gt_cost", gt)?;
    let costmap = CostMap::new(spec.clone(), gt_cost.values.clone())?;

    let passable = |c: CellIndex| costmap.get(c) < DEFAULT_BLOCK_THRESHOLD;
    let draw = |rng: &mut ChaCha8Rng| CellIndex::new(rng.random_range(0..size), rng.random_range(0..size));
    for _ in 0..SCENARIO_ATTEMPTS {
        let start = draw(&mut rng);
        let goal = draw(&mut rng);
        if start.chebyshev(goal) < size / 2 || !passable(start) || !passable(goal) {
            continue;
        }
        let mut problem = SearchProblem::new(start, goal);
        problem.block_threshold = Some(DEFAULT_BLOCK_THRESHOLD);
        let path = match astar(&costmap, &problem) {
            Ok(r) => r.path,
            Err(Error::NoPath(_)) => continue,
            Err(e) => return Err(e),
        };
        let points = path
            .iter()
            .map(|&c| spec.cell_to_geo(c))
            .collect::<Result<Vec<GeoPoint>>>()?;
        let expert = Trajectory::new(points, None)?;
        return Ok(Scenario {
            stack,
            gt_cost,
            classes,
            height,
            expert,
            path,
        });
    }
    Err(Error::RetryExhausted(format!(
        "no connected start/goal pair in {SCENARIO_ATTEMPTS} attempts (seed {seed})"
    )))
}
