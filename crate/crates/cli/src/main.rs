//! `cue`: command-line driver for the CUE pipeline.
//!
//! gen-synthetic -> train-head -> train-cue -> evaluate / ablate / ufi.
//! Failures print one line, `error category=<category>: <message>`, and
//! exit nonzero.

mod commands;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use cue_core::CueError;

const AFTER_HELP: &str = "\
Every option may also come from a --config file. The file holds one
`key = value` per line, where the key is the flag name without dashes
(`latent-dim = 100`); `#` starts a comment. A run record JSON written by
an earlier command (the `run_config` object, or a `.run.json` sidecar)
is accepted as well. Precedence: command line, then config file, then
built-in defaults.

Logging goes to stderr and is controlled by CUE_LOG (error, warn, info,
debug, trace; default warn).";

#[derive(Parser)]
#[command(name = "cue", version, about = "Latent-space uncertainty interpretation over precomputed embeddings")]
#[command(after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-mixture dataset with planted cue tokens.
    GenSynthetic,
    /// Train the linear-softmax head on the training split and freeze it.
    TrainHead,
    /// Train the CUE plug-in against a frozen head.
    TrainCue,
    /// Train the Bayesian-linear baseline plug-in against a frozen head.
    TrainBnn,
    /// Calibration report for one variant on one split.
    Evaluate,
    /// Latent-dimension removal curve as CSV.
    Ablate,
    /// Ranked latent dimensions and tokens for selected samples.
    Ufi,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenSynthetic => "gen-synthetic",
            Command::TrainHead => "train-head",
            Command::TrainCue => "train-cue",
            Command::TrainBnn => "train-bnn",
            Command::Evaluate => "evaluate",
            Command::Ablate => "ablate",
            Command::Ufi => "ufi",
        }
    }
}

/// Options shared by all subcommands. Values are parsed when a command
/// resolves them, so they are declared as raw strings here.
#[derive(Args)]
#[allow(dead_code)]
struct Opts {
    /// Config file with `key = value` lines or a saved run record.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Dataset directory (CUED format).
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<String>,
    /// Head checkpoint.
    #[arg(long, global = true, value_name = "PATH")]
    head: Option<String>,
    /// CUE plug-in checkpoint.
    #[arg(long, global = true, value_name = "PATH")]
    cue: Option<String>,
    /// BNN plug-in checkpoint.
    #[arg(long, global = true, value_name = "PATH")]
    bnn: Option<String>,
    /// Output path: dataset directory, checkpoint, JSON or CSV file.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<String>,
    /// Seed for every random draw [default: 0].
    #[arg(long, global = true)]
    seed: Option<String>,

    /// Reconstruction weight [default: 1].
    #[arg(long, global = true)]
    gamma1: Option<String>,
    /// Prediction-KL weight [default: 1].
    #[arg(long, global = true)]
    gamma2: Option<String>,
    /// Prediction-entropy weight [default: 0.1].
    #[arg(long, global = true)]
    gamma3: Option<String>,
    /// Regularizer weight [default: 0.1].
    #[arg(long, global = true)]
    gamma4: Option<String>,
    /// Latent dimension of the plug-in [default: 100].
    #[arg(long, global = true)]
    latent_dim: Option<String>,
    /// Training epochs [defaults: head 20, cue 50, bnn 20].
    #[arg(long, global = true)]
    epochs: Option<String>,
    /// Adam learning rate [defaults: head 2e-5, cue 2e-5, bnn 1e-3].
    #[arg(long, global = true)]
    lr: Option<String>,
    /// Minibatch size [default: 16].
    #[arg(long, global = true)]
    batch: Option<String>,
    /// CUE regularizer: orth or klprior [default: orth].
    #[arg(long, global = true)]
    regularizer: Option<String>,
    /// Initial latent log-variance of the CUE encoder [default: 0].
    #[arg(long, global = true)]
    init_logvar: Option<String>,
    /// Latent samples per input per CUE step [default: 1].
    #[arg(long, global = true)]
    latent_samples: Option<String>,
    /// Early-stopping patience in epochs on dev loss [default: off].
    #[arg(long, global = true)]
    patience: Option<String>,

    /// base, smoothed, mc_dropout, bnn or cue [default: base].
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Split to evaluate: train, dev or test [default: test].
    #[arg(long, global = true)]
    split: Option<String>,
    /// Stochastic passes for MC dropout and BNN [default: 16].
    #[arg(long, global = true)]
    mc_passes: Option<String>,
    /// Dropout rate for MC dropout inference [default: 0.1].
    #[arg(long, global = true)]
    dropout_rate: Option<String>,
    /// Input dropout while training the head [default: 0].
    #[arg(long, global = true)]
    train_dropout: Option<String>,
    /// Label smoothing while training the head [default: 0].
    #[arg(long, global = true)]
    label_smoothing: Option<String>,
    /// CUE reconstruction at evaluation: deterministic or sampled [default: deterministic].
    #[arg(long, global = true)]
    cue_mode: Option<String>,
    /// ECE bins [default: 9].
    #[arg(long, global = true)]
    ece_bins: Option<String>,
    /// ECE bin range: unit or above_chance [default: unit].
    #[arg(long, global = true)]
    bin_range: Option<String>,
    /// Entropy log base: e or 2 [default: e].
    #[arg(long, global = true)]
    entropy_base: Option<String>,
    /// Ablation bins; must divide the latent dimension [default: 10].
    #[arg(long, global = true)]
    ablate_bins: Option<String>,
    /// perbin or cumulative [default: perbin].
    #[arg(long, global = true)]
    ablate_mode: Option<String>,
    /// Ranking aggregation over samples: mean_rank, mean_score or per_sample [default: mean_rank].
    #[arg(long, global = true)]
    rank_aggregation: Option<String>,
    /// Top-scoring latent dimensions forming the influential representation [default: latent dim / 10].
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Samples for ufi: comma-separated indices, a split name, or all [default: 0].
    #[arg(long, global = true)]
    sample: Option<String>,

    /// BNN prior standard deviation [default: 1].
    #[arg(long, global = true)]
    prior_sigma: Option<String>,
    /// BNN weight-KL factor [default: 1e-4].
    #[arg(long, global = true)]
    bnn_beta: Option<String>,
    /// BNN initial posterior standard deviation [default: 0.01].
    #[arg(long, global = true)]
    init_sigma: Option<String>,

    /// Synthetic classes [default: 4].
    #[arg(long, global = true)]
    classes: Option<String>,
    /// Synthetic embedding dimension [default: 16].
    #[arg(long, global = true)]
    embed_dim: Option<String>,
    /// Synthetic samples per class [default: 500].
    #[arg(long, global = true)]
    samples_per_class: Option<String>,
    /// Distance between any two class means [default: 2.83].
    #[arg(long, global = true)]
    separation: Option<String>,
    /// Within-class standard deviation [default: 1].
    #[arg(long, global = true)]
    noise_sigma: Option<String>,
    /// Fraction of ambiguous samples per class [default: 0.3].
    #[arg(long, global = true)]
    ambiguous_fraction: Option<String>,
    /// Position of ambiguous centres between own and competitor mean [default: 0.5].
    #[arg(long, global = true)]
    ambiguous_position: Option<String>,
    /// Probability that an ambiguous sample takes the competitor label [default: 0.5].
    #[arg(long, global = true)]
    ambiguous_flip: Option<String>,
    /// Shift of all class means along the diagonal [default: 0].
    #[arg(long, global = true)]
    common_offset: Option<String>,
    /// Fewest tokens per sample [default: 6].
    #[arg(long, global = true)]
    min_tokens: Option<String>,
    /// Most tokens per sample [default: 10].
    #[arg(long, global = true)]
    max_tokens: Option<String>,
    /// Noise on ordinary token vectors [default: 0.3].
    #[arg(long, global = true)]
    token_jitter: Option<String>,
    /// Shift of the planted cue token toward the competitor [default: 4].
    #[arg(long, global = true)]
    cue_strength: Option<String>,
    /// Write token tables: true or false [default: true].
    #[arg(long, global = true)]
    with_tokens: Option<String>,
    /// Train,dev,test ratios [default: 0.6,0.2,0.2].
    #[arg(long, global = true)]
    split_ratios: Option<String>,
}

fn known_keys() -> BTreeSet<String> {
    Cli::command()
        .get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|l| *l != "config" && *l != "help" && *l != "version")
        .map(str::to_string)
        .collect()
}

fn cli_values(m: &ArgMatches) -> BTreeMap<String, String> {
    m.ids()
        .filter(|id| id.as_str() != "config")
        .filter(|id| m.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .filter_map(|id| {
            let raw = m.get_raw(id.as_str())?.next()?;
            Some((id.as_str().replace('_', "-"), raw.to_string_lossy().into_owned()))
        })
        .collect()
}

fn run() -> Result<(), CueError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            return Err(CueError::InvalidArgument(first.to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CueError::InvalidArgument(e.to_string()))?;
    let sub = matches.subcommand().map(|(_, m)| m).unwrap_or(&matches);
    let mut values = cli_values(&matches);
    values.extend(cli_values(sub));
    let file = match &cli.opts.config {
        Some(path) => config::parse_config_file(path, &known_keys())?,
        None => Default::default(),
    };
    let mut resolver = config::Resolver::new(cli.command.name(), values, file);
    match cli.command {
        Command::GenSynthetic => commands::gen_synthetic(&mut resolver),
        Command::TrainHead => commands::train_head(&mut resolver),
        Command::TrainCue => commands::train_cue(&mut resolver),
        Command::TrainBnn => commands::train_bnn(&mut resolver),
        Command::Evaluate => commands::evaluate(&mut resolver),
        Command::Ablate => commands::ablate(&mut resolver),
        Command::Ufi => commands::ufi(&mut resolver),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CUE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error category={}: {msg}", e.category());
            ExitCode::from(match e {
                CueError::InvalidArgument(_) => 2,
                _ => 1,
            })
        }
    }
}
