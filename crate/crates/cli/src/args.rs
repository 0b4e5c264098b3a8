use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "nirvana", version, about = "Neural patch-network video codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a raw RGB24 video into a stream.
    Encode(EncodeArgs),
    /// Rebuild raw RGB24 frames from a stream.
    Decode(DecodeArgs),
    /// Print header fields, chunk table and payload sizes of a stream.
    Info(InfoArgs),
    /// Sweep settings over synthetic videos and write a CSV of PSNR, BPP and time.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 5 layers of width 512, 32×32 patches.
    Full,
    /// 3 layers of width 128, 16×16 patches; for small inputs and tests.
    Tiny,
}

/// Training flags shared by `encode` and `bench`. Unset flags fall back to
/// the config file, then to built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    /// TOML file with any of the settings below (kebab-case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Square patch side in pixels.
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Frames per group.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Iterations for the first group of each chunk.
    #[arg(long)]
    pub iters_first: Option<usize>,
    /// Iterations for every later group.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lambda_entropy: Option<f64>,
    /// Learning rate of the latents and the convolutional head.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub chunks: Option<usize>,
    /// Threads for chunk-parallel encoding.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Raw RGB24 frames, row-major, frames back to back.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Defaults to the number of whole frames in the input file.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Per-group CSV report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Raw RGB24 reference of the same size; prints PSNR against it.
    #[arg(long)]
    pub psnr_against: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VideoKind {
    Static,
    Translating,
    NoiseModulated,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CSV destination.
    #[arg(long)]
    pub output: PathBuf,
    /// Side of the square synthetic frames.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
    /// Pattern shift in pixels per frame.
    #[arg(long, default_value_t = 1.0)]
    pub motion: f32,
    /// Amplitude of the per-pixel noise of noise-modulated videos.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f32,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1..,
          default_values_t = [VideoKind::Static, VideoKind::Translating, VideoKind::NoiseModulated])]
    pub videos: Vec<VideoKind>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [1e-5, 1e-4, 5e-4])]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [8, 16])]
    pub patch_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [2, 3])]
    pub group_sizes: Vec<usize>,
    /// Values of `--iters` (later-group iterations) to sweep.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [500, 2000])]
    pub iters_list: Vec<usize>,
    #[command(flatten)]
    pub train: TrainFlags,
}
