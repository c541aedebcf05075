//! `rnnattack`: train, attack, certify and probe small recurrent classifiers.
//!
//! Exit status 0 on success, 1 on a usage error, 2 on a runtime error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rnnattack", version, about = "Feedback-style adversarial attacks on recurrent classifiers")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier on the frequency task and write its weights.
    Train(TrainArgs),
    /// Attack one signal and write the perturbation, probabilities and states.
    Attack(AttackCmd),
    /// Check the row certificate of a vanilla cell over a state and input box.
    Certify(CertifyArgs),
    /// Coppel and Grönwall envelopes around one attacked run.
    Bounds(BoundsArgs),
    /// Success-rate and norm curves over a gain grid.
    Sweep(SweepArgs),
    /// Manifest-gap scaling in eps and fixed-point alignment diagnostics.
    Probe(ProbeArgs),
    /// Turn a run directory's CSVs into plot-data files and a plot script.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Directory that receives every artifact and the manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Seed for every random draw of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Vanilla,
    Gru,
    Lstm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrainModeArg {
    Lifted,
    Discrete,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub restart_epochs: Option<usize>,
    /// Time constant of the continuous lifting.
    #[arg(long)]
    pub delta: Option<f64>,
    /// RK4 substeps per sample of the lifting.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<TrainModeArg>,
    #[arg(long, default_value_t = 2000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub test_size: usize,
    #[arg(long, default_value_t = 1)]
    pub train_seed: u64,
    #[arg(long, default_value_t = 2)]
    pub test_seed: u64,
}

/// Where the attacked signal comes from.
#[derive(Debug, Args)]
pub struct SignalArgs {
    /// Signal CSV with header `t,x0,...`.
    #[arg(long, conflicts_with_all = ["period", "index"])]
    pub input: Option<PathBuf>,
    /// Synthesise a frequency-task sine with this period.
    #[arg(long, conflicts_with = "index")]
    pub period: Option<f64>,
    #[arg(long, default_value_t = 0.0, requires = "period")]
    pub phase: f64,
    /// Take this example of a generated frequency-task set.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub data_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Grad,
    Fixed,
    Dynamic,
    Optimal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReadoutArg {
    Affine,
    Clipped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FpMethodArg {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptInitArg {
    Noise,
    GradientSign,
}

/// Attack settings; anything left unset keeps the library default.
#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Disturbance gain.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Confidence threshold of the readout.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutArg>,
    /// Per-sample ∞-norm cap; the bound of the optimal attack.
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long)]
    pub source: Option<usize>,
    /// First-sample gradient-sign step of the fixed-point attacks.
    #[arg(long)]
    pub kick: Option<f64>,
    /// Integration substeps per sample.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub fp_tol: Option<f64>,
    #[arg(long)]
    pub fp_max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub fp_method: Option<FpMethodArg>,
    #[arg(long)]
    pub fp_relax: Option<f64>,
    /// Timescale of the dynamic attack.
    #[arg(long)]
    pub eps_fast: Option<f64>,
    #[arg(long)]
    pub fast_steps_per_eps: Option<f64>,
    /// Quadrature nodes for the input matrix.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Effort weight of the optimal attack.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub opt_lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Use raw gradients in the optimal attack instead of ∞-normalised ones.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long, value_enum)]
    pub opt_init: Option<OptInitArg>,
    #[arg(long)]
    pub opt_restarts: Option<usize>,
    #[arg(long)]
    pub warm_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AttackCmd {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value = "grad")]
    pub method: MethodArg,
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Vanilla weight file.
    #[arg(long)]
    pub weights: PathBuf,
    /// State box as `lo:hi`, once for all coordinates or once per coordinate.
    #[arg(long, allow_hyphen_values = true, default_value = "-1:1")]
    pub h_box: Vec<String>,
    /// Input box as `lo:hi`, once for all channels or once per channel.
    #[arg(long, allow_hyphen_values = true, default_value = "-1:1")]
    pub x_box: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value = "grad")]
    pub method: MethodArg,
    /// Grönwall weight vector, one entry per state coordinate; ones by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Vec<f64>,
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value = "grad")]
    pub method: MethodArg,
    /// Values of alpha, or of eps_max for the optimal attack.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3")]
    pub gains: Vec<f64>,
    /// Only attack nominals of this class.
    #[arg(long)]
    pub class: Option<usize>,
    /// Also write the class-by-class targeted success matrix at this gain.
    #[arg(long)]
    pub targeted_gain: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub data_size: usize,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub attack: AttackArgs,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub weights: PathBuf,
    /// Strictly decreasing timescales.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
    pub eps: Vec<f64>,
    /// Initial fast disturbances, each applied to every channel.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub delta_inits: Vec<f64>,
    /// Sample whose perturbed state feeds the alignment diagnostic.
    #[arg(long)]
    pub align_sample: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
    pub align_alphas: Vec<f64>,
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding the CSVs of an earlier run.
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli, argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
