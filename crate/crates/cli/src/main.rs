//! `terracost` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 runtime
//! failure (for example no path between start and goal).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "terracost", version, about = "Learned off-road costmaps and path planning")]
struct Cli {
    /// Pretty-print JSON written to stdout.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a 4-channel feature stack from a point cloud or a DEM.
    Rasterize(RasterizeArgs),
    /// Generate a synthetic training dataset.
    MakeDataset(MakeDatasetArgs),
    /// Train a cost model from a JSON config.
    Train(TrainArgs),
    /// Plan a path on a costmap or on a model's prediction for a stack.
    Plan(PlanArgs),
    /// Print metrics of a checkpoint on a dataset split as JSON.
    Eval(EvalArgs),
    /// Write raster channels as PGM images.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["points", "dem"])))]
pub struct RasterizeArgs {
    /// Point cloud, CSV or TBPT.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// ESRI ASCII grid.
    #[arg(long)]
    pub dem: Option<PathBuf>,
    /// Semantic mask PGM covering the output grid.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Top-left corner as `x,y`. Defaults to the DEM extent with --dem.
    #[arg(long, value_parser = parse_pair_f64)]
    pub origin: Option<(f64, f64)>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub fill_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for PGM previews of the four channels.
    #[arg(long)]
    pub preview: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MakeDatasetArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tile side in cells (even, 16 to 128).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Train, val and test fractions as `a,b,c`.
    #[arg(long, value_parser = parse_triple_f64)]
    pub split: Option<[f64; 3]>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON training config; relative paths in it are resolved against its directory.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("input").required(true).args(["stack", "costmap"])))]
pub struct PlanArgs {
    /// Feature stack TBRZ; needs --checkpoint.
    #[arg(long, requires = "checkpoint")]
    pub stack: Option<PathBuf>,
    /// Single-channel costmap TBRZ.
    #[arg(long)]
    pub costmap: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `row,col`, or `x,y` with --geo.
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    #[arg(long, allow_hyphen_values = true)]
    pub goal: String,
    /// Read --start and --goal as map coordinates.
    #[arg(long)]
    pub geo: bool,
    /// Never enter cells with cost at or above this value.
    #[arg(long)]
    pub block_threshold: Option<f32>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_geojson: Option<PathBuf>,
    /// Write the searched costmap; `.tbrz` keeps values, anything else is a PGM preview.
    #[arg(long)]
    pub export_costmap: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `manifest.json` or the dataset directory holding it.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// TBRZ file.
    #[arg(long)]
    pub input: PathBuf,
    /// Channel to export; without it every channel is written into --out as a directory.
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(out)
}

fn parse_pair_f64(s: &str) -> Result<(f64, f64), String> {
    parse_floats::<2>(s).map(|[a, b]| (a, b))
}

fn parse_triple_f64(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

/// Failure of a subcommand, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(terracost::Error),
}

impl From<terracost::Error> for CliError {
    fn from(e: terracost::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Rasterize(a) => commands::rasterize(a),
        Command::MakeDataset(a) => commands::make_dataset(a),
        Command::Train(a) => commands::train(a),
        Command::Plan(a) => commands::plan(a),
        Command::Eval(a) => commands::eval(a),
        Command::Export(a) => commands::export(a),
    };
    match result.and_then(|v| commands::emit(v, cli.pretty)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("terracost: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
