use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fringeforge", version, about = "Phase retrieval from off-axis interferograms")]
pub struct Cli {
    /// Plain-text `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic interferogram/phase dataset.
    Synth(SynthArgs),
    /// Run the conventional demodulate, unwrap, compensate pipeline.
    Classical(ClassicalArgs),
    /// Train the super-network and prune it to an architecture.
    Search(SearchArgs),
    /// Re-prune a saved super-network at another threshold.
    Prune(PruneArgs),
    /// Train a network on an architecture file or the full graph.
    Train(TrainArgs),
    /// Report PSNR and MixGE of a checkpoint on one split.
    Eval(EvalArgs),
    /// Write phase maps predicted from interferograms.
    Infer(InferArgs),
    /// Time single-image forward passes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Labels {
    Analytic,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    Desk,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Bn {
    /// Statistics of the image being processed.
    Batch,
    /// Running averages recorded during training.
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 48)]
    pub n: usize,
    /// Image side in pixels; a power of two.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Labels::Analytic)]
    pub labels: Labels,
    /// Fringe style.
    #[arg(long, value_enum, default_value_t = Style::Desk)]
    pub fringe: Style,
    /// Standard deviation of additive intensity noise.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ClassicalArgs {
    /// Interferogram (QPT1). Without it a noiseless synthetic scene is rendered.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Sample-free calibration interferogram (QPT1).
    #[arg(long, value_name = "FILE")]
    pub calibration: Option<PathBuf>,
    /// Ground-truth phase in radians (QPT1), for the PSNR report.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// Carrier as `FX,FY` cycles across the frame. Defaults to `SIZE/16,0`.
    #[arg(long, value_name = "FX,FY")]
    pub carrier: Option<String>,
    /// Sideband window radius in frequency bins.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Stop after demodulation.
    #[arg(long)]
    pub no_unwrap: bool,
    /// Subtract the calibration phase.
    #[arg(long)]
    pub compensate: bool,
    /// Side of the synthetic scene.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SearchArgs {
    /// Dataset directory written by `synth`.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub l_stages: usize,
    /// Weight of the binarization loss.
    #[arg(long, default_value_t = 5e-3)]
    pub alpha: f64,
    /// Weight of the sparsity loss.
    #[arg(long, default_value_t = 5e-4)]
    pub beta: f64,
    /// Pruning threshold.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Joint-phase epochs.
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.008)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Batch-norm statistics for validation passes.
    #[arg(long, value_enum, default_value_t = Bn::Batch)]
    pub bn: Bn,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PruneArgs {
    /// Super-network checkpoint written by `search`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Output architecture file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Architecture file written by `search` or `prune`.
    #[arg(long, value_name = "FILE", conflicts_with = "full", required_unless_present = "full")]
    pub arch: Option<PathBuf>,
    /// Train the unpruned graph instead of an architecture file.
    #[arg(long)]
    pub full: bool,
    /// Stage count for `--full`.
    #[arg(long, default_value_t = 4)]
    pub l_stages: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.008)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Train on random square crops of this side.
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long, value_enum, default_value_t = Bn::Batch)]
    pub bn: Bn,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = Bn::Batch)]
    pub bn: Bn,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = false)]
pub struct InferArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Interferograms (QPT1); repeatable.
    #[arg(long, value_name = "FILE")]
    pub input: Vec<PathBuf>,
    /// Use every input of a dataset split instead.
    #[arg(long, value_name = "DIR", conflicts_with = "input")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = Bn::Batch)]
    pub bn: Bn,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Image sides to time; comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,128")]
    pub size: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value_t = Bn::Batch)]
    pub bn: Bn,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
