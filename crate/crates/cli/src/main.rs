//! `lidar-aug`: build sample databases, augment KITTI-layout datasets,
//! compute point statistics, evaluate detections and list presets.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! data errors. Diagnostics go to standard error.

mod commands;
mod failure;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lidar_aug_core::Mode;

#[derive(Parser, Debug)]
#[command(name = "lidar-aug", version, about = "Deterministic LiDAR data augmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop every populated annotation into a sample database.
    BuildDb(BuildDbArgs),
    /// Apply an augmentation policy and write the result in KITTI layout.
    Augment(AugmentArgs),
    /// Foreground/background point statistics.
    Stats(StatsArgs),
    /// Evaluate KITTI result files against the dataset labels.
    Eval(EvalArgs),
    /// Print the 43 preset policies, one JSON config per line.
    Presets,
}

/// Where scenes come from.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// KITTI-layout root holding velodyne/, label_2/ and calib/.
    #[arg(long, value_name = "DIR", required_unless_present = "synthetic")]
    pub dataset_root: Option<PathBuf>,

    /// File listing the scene ids to use, one per line (default: all scenes).
    #[arg(long, value_name = "FILE")]
    pub split: Option<PathBuf>,

    /// Use N generated scenes with planted boxes instead of a dataset on disk.
    #[arg(long, value_name = "N", conflicts_with_all = ["dataset_root", "split"])]
    pub synthetic: Option<usize>,

    /// Points per generated scene.
    #[arg(long, value_name = "N", default_value_t = 20_000, requires = "synthetic")]
    pub synthetic_points: usize,

    /// Seed of the generated dataset.
    #[arg(long, value_name = "SEED", default_value_t = 0, requires = "synthetic")]
    pub synthetic_seed: u64,

    /// Size of the scene worker pool.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
}

#[derive(Args, Debug)]
pub struct BuildDbArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Directory receiving the database files.
    #[arg(long, value_name = "DIR")]
    pub output_root: PathBuf,

    /// Smallest number of member points for a box to enter the database.
    #[arg(long, default_value_t = 5)]
    pub min_points: usize,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Preset name (policy0 … policy42) or path to a JSON policy.
    #[arg(long)]
    pub policy: String,

    /// Overrides the seed of the policy.
    #[arg(long, env = "LIDAR_AUG_SEED")]
    pub seed: Option<u64>,

    /// Directory receiving the augmented dataset and its manifest.
    #[arg(long, value_name = "DIR")]
    pub output_root: PathBuf,

    /// `train` runs every step; `test` runs only test-time steps (ground removal).
    #[arg(long, default_value_t = Mode::Train, value_parser = parse_mode)]
    pub mode: Mode,

    /// Sample database directory, needed by oversampling policies.
    #[arg(long, value_name = "DIR")]
    pub db: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Also write stats.json and stats.txt here.
    #[arg(long, value_name = "DIR")]
    pub output_root: Option<PathBuf>,

    /// Count every point instead of only those in the camera field of view.
    #[arg(long)]
    pub all_points: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Directory of KITTI result files (`<scene_id>.txt`, label lines plus a score).
    #[arg(long, value_name = "DIR")]
    pub results_dir: PathBuf,

    /// Also report AP over 11 recall points.
    #[arg(long)]
    pub ap11: bool,

    #[arg(long, default_value_t = 0.7)]
    pub iou_threshold: f64,

    #[arg(long = "class", default_value = "Car")]
    pub class_name: String,

    /// Also write eval.json here.
    #[arg(long, value_name = "DIR")]
    pub output_root: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: lidar_aug_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildDb(args) => commands::build_db(&args),
        Command::Augment(args) => commands::augment(&args),
        Command::Stats(args) => commands::stats(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Presets => commands::presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
