//! Command-line surface: `preprocess`, `train`, `predict`, `evaluate`,
//! `robustness` and `synth`.

mod commands;
mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::{config_keys_help, synth_manifest, DataConfig, OutputConfig, RobustnessConfig, RunConfig, SampleConfig};
pub use pipeline::{
    build_bundle, load_raw, predict_test_log1p, robustness_table, robustness_text, test_pcc, RobustnessRow,
};

use crate::data::SynthConfig;
use crate::error::Error;

#[derive(Parser, Debug)]
#[command(name = "spatial-dit", version, about = "Conditional diffusion imputation of spatial transcriptomics")]
pub struct Cli {
    /// Cap on worker threads used for per-gene sampling.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.iterations=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Filter, normalize, align and split the ST/SC pair named in the config.
    Preprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the denoiser on a preprocessed bundle.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `condition=off|mlp|shared-genes` or `concat=off`.
        #[arg(long, value_name = "KEY=VALUE")]
        ablation: Vec<String>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sample predictions for the test split or an explicit gene list.
    Predict {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output.dir>/checkpoints/best.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated gene ids (shared or SC-only).
        #[arg(long, value_delimiter = ',')]
        genes: Vec<String>,
        /// Write counts (`expm1`, clamped at zero) instead of log1p values.
        #[arg(long)]
        counts: bool,
        /// Defaults to `<output.dir>/predictions.tsv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score prediction files against a truth matrix.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        /// Prediction matrix; repeat for several methods.
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// Method label per `--pred`, in order (default: file stem).
        #[arg(long = "label")]
        labels: Vec<String>,
        /// Output directory for the reports.
        #[arg(long)]
        out: PathBuf,
        /// Also write a hierarchical-clustering gene order per method.
        #[arg(long)]
        cluster_order: bool,
    },
    /// Downsample the raw ST counts and report robustness scores.
    Robustness {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated rates (default from `robustness.rates`).
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
    },
    /// Generate a planted low-rank ST/SC pair with a run manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        genes: Option<usize>,
        #[arg(long)]
        spots: Option<usize>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        sc_only_genes: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn synth_help() -> String {
    let d = SynthConfig::default();
    format!(
        "Defaults: genes={} spots={} cells={} sc-only-genes={} rank={} noise={} seed={}",
        d.genes, d.spots, d.cells, d.sc_only_genes, d.rank, d.noise, d.seed
    )
}

fn command() -> clap::Command {
    let keys = config_keys_help();
    let mut cmd = Cli::command();
    for name in ["preprocess", "train", "predict", "robustness"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_help(keys.clone()));
    }
    cmd.mut_subcommand("synth", |c| c.after_help(synth_help()))
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 usage, 2 data or configuration, 3 numeric.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
