//! `isingmap`: simulate, train, map and score occupancy maps.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "isingmap", version, about = "Continuous occupancy mapping from 2D lidar")]
struct Cli {
    /// Key-value file supplying defaults for any long option.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the benchmark world, its trajectory and simulated scans.
    Simulate(SimulateArgs),
    /// Learn kernel hyperparameters from scans.
    Train(TrainArgs),
    /// Build a field or grid map and render it as a PGM.
    Map(MapArgs),
    /// Score field and grid maps against simulated ground truth.
    Roc(RocArgs),
    /// Print statistics of a CARMEN log.
    Info(InfoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sensor {
    /// 180° front laser, 10 m no-return threshold.
    Intel,
    /// 180° front laser, 80 m no-return threshold.
    Freiburg,
    /// 360° simulated lidar, 3 m range.
    Sim,
}

impl std::str::FromStr for Sensor {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Sensor as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Field,
    Grid,
    Both,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Method as ValueEnum>::from_str(s, true)
    }
}

/// Where scans come from: a CARMEN log or a `simulate` output directory.
#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// CARMEN log file (`-` for standard input).
    #[arg(long, value_name = "FILE", conflicts_with = "env")]
    pub log: Option<PathBuf>,
    /// Directory written by `simulate`; its scans.log and sensor.txt are used.
    #[arg(long, value_name = "DIR")]
    pub env: Option<PathBuf>,
    /// Sensor preset for --log input [default: intel].
    #[arg(long, value_enum)]
    pub sensor: Option<Sensor>,
    /// Override the preset's field of view, in degrees.
    #[arg(long, value_name = "DEG")]
    pub fov_deg: Option<f64>,
    /// Override the preset's maximum range, in meters.
    #[arg(long, value_name = "M")]
    pub max_range: Option<f64>,
    /// Take poses from the FLASER robot fields instead of the laser fields.
    #[arg(long)]
    pub robot_pose: bool,
    /// Skip malformed records instead of stopping at the first one.
    #[arg(long)]
    pub skip_bad: bool,
}

/// Hyperparameters inline or from a file.
#[derive(Args, Debug, Clone, Default)]
pub struct ThetaArgs {
    /// Hyperparameter file with `sigma_f=...` lines.
    #[arg(long, value_name = "FILE", conflicts_with = "theta_values")]
    pub theta: Option<PathBuf>,
    /// Inline hyperparameters `sigma_f,sigma_h,l_p,l_f,l_b`.
    #[arg(long, value_name = "LIST")]
    pub theta_values: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// World and trajectory seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Beams per scan [default: 180].
    #[arg(long)]
    pub beams: Option<usize>,
    /// Field of view in degrees [default: 360].
    #[arg(long, value_name = "DEG")]
    pub fov_deg: Option<f64>,
    /// Maximum range in meters [default: 3].
    #[arg(long, value_name = "M")]
    pub max_range: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Starting hyperparameters [default: 1,1,0.1,0.15,0.05].
    #[command(flatten)]
    pub theta: ThetaArgs,
    /// Where to write the trained hyperparameters.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Optional CSV of every objective evaluation.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Objective evaluation budget [default: 500].
    #[arg(long)]
    pub max_evals: Option<usize>,
    /// Relative convergence tolerance [default: 1e-4].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Fraction of hit beams used [default: 1].
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Seed for subsampling and free pseudo-points [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lower end of the free-point fraction range [default: 0.1].
    #[arg(long)]
    pub fraction_low: Option<f64>,
    /// Upper end of the free-point fraction range [default: 0.9].
    #[arg(long)]
    pub fraction_high: Option<f64>,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub theta: ThetaArgs,
    /// Map representation [default: field].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Raster resolution in meters [default: 0.1].
    #[arg(long, value_name = "M")]
    pub res: Option<f64>,
    /// Raster bounds `min_x,min_y,max_x,max_y` [default: data bounds].
    #[arg(long, value_name = "BOX")]
    pub bbox: Option<String>,
    /// Output PGM path.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Field snapshot path [default: the PGM path with a .field extension].
    #[arg(long, value_name = "FILE")]
    pub snapshot: Option<PathBuf>,
    /// What to do with no-return beams: discard or free-only [default: discard].
    #[arg(long)]
    pub max_range_policy: Option<String>,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// Directory written by `simulate`.
    #[arg(long, value_name = "DIR")]
    pub env: Option<PathBuf>,
    #[command(flatten)]
    pub theta: ThetaArgs,
    /// Methods to score [default: both].
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Evaluation point spacing in meters [default: 0.05].
    #[arg(long, value_name = "M")]
    pub spacing: Option<f64>,
    /// Grid map cell size in meters [default: 0.1].
    #[arg(long, value_name = "M")]
    pub grid_res: Option<f64>,
    /// Write the text report here as well as to standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write ROC curves to `<PREFIX>-field.csv` / `<PREFIX>-grid.csv`.
    #[arg(long, value_name = "PREFIX")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

/// How a command failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<isingmap::Error> for Failure {
    fn from(e: isingmap::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.config {
        Some(path) => ConfigFile::load(path),
        None => Ok(ConfigFile::default()),
    }
    .and_then(|cfg| match cli.command {
        Command::Simulate(a) => commands::simulate(&a, &cfg),
        Command::Train(a) => commands::train(&a, &cfg),
        Command::Map(a) => commands::map(&a, &cfg),
        Command::Roc(a) => commands::roc(&a, &cfg),
        Command::Info(a) => commands::info(&a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
