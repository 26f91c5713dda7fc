//! One function per subcommand. Each resolves its parameters, runs the
//! pipeline stage and writes its artifacts together with the run record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cue_core::checkpoint::{load_bnn, load_cue, load_head, save_bnn, save_cue, save_head};
use cue_core::classifier::{train_bnn_plugin, train_head as fit_head, BnnTrainConfig, HeadTrainConfig, LinearSoftmaxHead};
use cue_core::cue::{train_cue as fit_cue, write_trace_csv, CueTrainConfig, ReconstructionMode, Regularizer};
use cue_core::dataset::{load_dataset, save_dataset, split, synth_with_truth, EmbeddingDataset, SplitTag, SyntheticConfig};
use cue_core::evaluate::{evaluate as run_evaluation, EvalOptions, Plugin, Variant};
use cue_core::interpret::{ablate_dims, ufi as run_ufi, write_ablation_csv, AblationConfig, AblationMode, RankAggregation};
use cue_core::metrics::{BinRange, CalibrationReport, ReportOptions};
use cue_core::numerics::{LogBase, RngState};
use cue_core::{CueError, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::{List, Resolver};

// Stream of the root seed used by each stage. gen-synthetic and the three
// trainers match `run_benchmark`, so a CLI run with the benchmark settings
// reproduces it.
const STREAM_SYNTH: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_HEAD: u64 = 2;
const STREAM_CUE: u64 = 3;
const STREAM_BNN: u64 = 4;
const STREAM_EVAL: u64 = 5;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CueError + '_ {
    move |e| CueError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CueError::Format(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CueError::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

/// `<path>.run.json`, the run record next to a CSV artifact.
fn run_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn seed(r: &mut Resolver) -> Result<u64> {
    let given = r.optional::<u64>("seed")?;
    let seed = given.unwrap_or(0);
    if given.is_none() {
        log::warn!("no --seed given, using {seed}");
    }
    r.record("seed", &seed);
    Ok(seed)
}

fn report_options(r: &mut Resolver) -> Result<ReportOptions> {
    let d = ReportOptions::default();
    Ok(ReportOptions {
        ece_bins: r.get("ece-bins", d.ece_bins)?,
        bin_range: r.get::<BinRange>("bin-range", d.bin_range)?,
        entropy_base: r.get::<LogBase>("entropy-base", d.entropy_base)?,
    })
}

fn load_data(r: &mut Resolver) -> Result<EmbeddingDataset> {
    let path = r.required_path("data")?;
    load_dataset(&path)
}

fn load_frozen_head(r: &mut Resolver) -> Result<LinearSoftmaxHead> {
    let path = r.required_path("head")?;
    Ok(load_head(&path)?.0)
}

fn warn_unused(r: &Resolver) {
    for k in r.unused_cli_keys() {
        log::warn!("--{k} has no effect on {}", r.command());
    }
}

pub fn gen_synthetic(r: &mut Resolver) -> Result<()> {
    let out = r.required_path("out")?;
    let seed = seed(r)?;
    let d = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        num_classes: r.get("classes", d.num_classes)?,
        embed_dim: r.get("embed-dim", d.embed_dim)?,
        samples_per_class: r.get("samples-per-class", d.samples_per_class)?,
        separation: r.get("separation", d.separation)?,
        noise_sigma: r.get("noise-sigma", d.noise_sigma)?,
        tokens_per_sample: (
            r.get("min-tokens", d.tokens_per_sample.0)?,
            r.get("max-tokens", d.tokens_per_sample.1)?,
        ),
        ambiguous_fraction: r.get("ambiguous-fraction", d.ambiguous_fraction)?,
        ambiguous_position: r.get("ambiguous-position", d.ambiguous_position)?,
        ambiguous_label_flip: r.get("ambiguous-flip", d.ambiguous_label_flip)?,
        common_offset: r.get("common-offset", d.common_offset)?,
        token_jitter: r.get("token-jitter", d.token_jitter)?,
        cue_strength: r.get("cue-strength", d.cue_strength)?,
        with_tokens: r.get("with-tokens", d.with_tokens)?,
        seed,
    };
    let ratios = r.get("split-ratios", List(vec![0.6, 0.2, 0.2]))?;
    let [a, b, c] = ratios.0[..] else {
        return Err(CueError::InvalidArgument(format!(
            "--split-ratios needs three values, got {}",
            ratios.0.len()
        )));
    };
    warn_unused(r);

    let root = RngState::new(seed);
    let mut data = synth_with_truth(&cfg, &mut root.fork(STREAM_SYNTH))?;
    data.dataset = split(data.dataset, (a, b, c), &mut root.fork(STREAM_SPLIT))?;
    save_dataset(&data.dataset, &out)?;
    let means: Vec<&[f64]> = (0..data.means.rows()).map(|i| data.means.row(i)).collect();
    write_json(
        &out.join("truth.json"),
        &json!({ "means": means, "samples": data.truth }),
    )?;
    write_json(&out.join("run_config.json"), &r.run_config())?;
    log::info!("wrote {} samples to {}", data.dataset.len(), out.display());
    Ok(())
}

pub fn train_head(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let out = r.required_path("out")?;
    let seed = seed(r)?;
    let d = HeadTrainConfig::default();
    let cfg = HeadTrainConfig {
        lr: r.get("lr", d.lr)?,
        epochs: r.get("epochs", d.epochs)?,
        batch_size: r.get("batch", d.batch_size)?,
        label_smoothing: r.get("label-smoothing", d.label_smoothing)?,
        dropout: r.get("train-dropout", d.dropout)?,
        patience: r.optional("patience")?,
    };
    let report = report_options(r)?;
    warn_unused(r);

    let training = fit_head(&data, &cfg, &mut RngState::new(seed).fork(STREAM_HEAD))?;
    let head = training.head;
    let mut reports = serde_json::Map::new();
    for tag in [SplitTag::Dev, SplitTag::Test] {
        if data.split_indices(tag).is_empty() {
            continue;
        }
        // The base head is deterministic, so this RNG is never drawn from.
        let ev = run_evaluation(
            &head,
            Plugin::None,
            Variant::Base,
            &data,
            tag,
            &EvalOptions { report, ..EvalOptions::default() },
            &mut RngState::new(seed),
        )?;
        reports.insert(tag.as_str().into(), json!(ev.report));
    }
    let run = r.run_config();
    save_head(&out, &head, json!({ "run_config": run }))?;
    write_json(
        &with_suffix(&out, ".report.json"),
        &json!({
            "run_config": run,
            "initial_loss": training.initial_loss,
            "history": training.history,
            "stopped_early": training.stopped_early,
            "reports": reports,
        }),
    )?;
    Ok(())
}

pub fn train_cue(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let head = load_frozen_head(r)?;
    let out = r.required_path("out")?;
    let seed = seed(r)?;
    let d = CueTrainConfig::default();
    let cfg = CueTrainConfig {
        gammas: [
            r.get("gamma1", d.gammas[0])?,
            r.get("gamma2", d.gammas[1])?,
            r.get("gamma3", d.gammas[2])?,
            r.get("gamma4", d.gammas[3])?,
        ],
        regularizer: r.get::<Regularizer>("regularizer", d.regularizer)?,
        latent_dim: r.get("latent-dim", d.latent_dim)?,
        lr: r.get("lr", d.lr)?,
        epochs: r.get("epochs", d.epochs)?,
        batch_size: r.get("batch", d.batch_size)?,
        latent_samples: r.get("latent-samples", d.latent_samples)?,
        init_logvar: r.get("init-logvar", d.init_logvar)?,
        deterministic_inference: d.deterministic_inference,
        patience: r.optional("patience")?,
    };
    warn_unused(r);

    let training = fit_cue(&data, &head, &cfg, &mut RngState::new(seed).fork(STREAM_CUE))?;
    let run = r.run_config();
    save_cue(
        &out,
        &training.model,
        json!({ "run_config": run, "stopped_early": training.stopped_early }),
    )?;
    let trace = with_suffix(&out, ".trace.csv");
    let mut w = BufWriter::new(File::create(&trace).map_err(io_err(&trace))?);
    write_trace_csv(&training.trace, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&trace))?;
    write_json(&run_sidecar(&trace), &run)?;
    Ok(())
}

pub fn train_bnn(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let head = load_frozen_head(r)?;
    let out = r.required_path("out")?;
    let seed = seed(r)?;
    let d = BnnTrainConfig::default();
    let cfg = BnnTrainConfig {
        latent_dim: r.get("latent-dim", d.latent_dim)?,
        lr: r.get("lr", d.lr)?,
        epochs: r.get("epochs", d.epochs)?,
        batch_size: r.get("batch", d.batch_size)?,
        prior_sigma: r.get("prior-sigma", d.prior_sigma)?,
        beta: r.get("bnn-beta", d.beta)?,
        init_sigma: r.get("init-sigma", d.init_sigma)?,
        learn_sigma: d.learn_sigma,
        passes: r.get("mc-passes", d.passes)?,
    };
    warn_unused(r);

    let training = train_bnn_plugin(&data, &head, &cfg, &mut RngState::new(seed).fork(STREAM_BNN))?;
    save_bnn(
        &out,
        &training.plugin,
        json!({ "run_config": r.run_config(), "losses": training.losses }),
    )?;
    Ok(())
}

pub fn evaluate(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let head = load_frozen_head(r)?;
    let variant = r.get::<Variant>("variant", Variant::Base)?;
    let tag = r.get::<SplitTag>("split", SplitTag::Test)?;
    let d = EvalOptions::default();
    let mut opts = EvalOptions {
        report: report_options(r)?,
        ..d
    };
    let mut cue = None;
    let mut bnn = None;
    match variant {
        Variant::McDropout => {
            opts.mc_passes = r.get("mc-passes", d.mc_passes)?;
            opts.dropout_rate = r.get("dropout-rate", d.dropout_rate)?;
        }
        Variant::Bnn => {
            opts.mc_passes = r.get("mc-passes", d.mc_passes)?;
            bnn = Some(load_bnn(&r.required_path("bnn")?)?.0);
        }
        Variant::Cue => {
            opts.cue_mode = r.get::<ReconstructionMode>("cue-mode", d.cue_mode)?;
            cue = Some(load_cue(&r.required_path("cue")?)?.0);
        }
        Variant::Base | Variant::Smoothed => {}
    }
    let out = r.optional::<PathBuf>("out")?;
    let seed = seed(r)?;
    warn_unused(r);

    let plugin = match (&cue, &bnn) {
        (Some(m), _) => Plugin::Cue(m),
        (_, Some(p)) => Plugin::Bnn(p),
        _ => Plugin::None,
    };
    let mut rng = RngState::new(seed).fork(STREAM_EVAL);
    let ev = run_evaluation(&head, plugin, variant, &data, tag, &opts, &mut rng)?;
    let run = r.run_config();
    match out {
        Some(path) if path.extension().is_some_and(|e| e == "csv") => {
            let text = format!(
                "variant,split,{}\n{},{},{}\n",
                CalibrationReport::CSV_HEADER,
                variant.as_str(),
                tag.as_str(),
                ev.report.csv_row()
            );
            std::fs::write(&path, text).map_err(io_err(&path))?;
            write_json(&run_sidecar(&path), &json!({ "run_config": run, "report": ev.report }))
        }
        Some(path) => write_json(&path, &json!({ "run_config": run, "evaluation": ev })),
        None => print_json(&json!({ "run_config": run, "evaluation": ev })),
    }
}

pub fn ablate(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let head = load_frozen_head(r)?;
    let model = load_cue(&r.required_path("cue")?)?.0;
    let out = r.required_path("out")?;
    let tag = r.get::<SplitTag>("split", SplitTag::Test)?;
    let d = AblationConfig::default();
    let cfg = AblationConfig {
        bins: r.get("ablate-bins", d.bins)?,
        mode: r.get::<AblationMode>("ablate-mode", d.mode)?,
        aggregation: r.get::<RankAggregation>("rank-aggregation", d.aggregation)?,
        report: report_options(r)?,
    };
    warn_unused(r);

    let curve = ablate_dims(&model, &head, &data, tag, &cfg)?;
    let mut w = BufWriter::new(File::create(&out).map_err(io_err(&out))?);
    write_ablation_csv(&curve, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&out))?;
    write_json(
        &run_sidecar(&out),
        &json!({
            "run_config": r.run_config(),
            "baseline": curve.baseline,
            "order": curve.order,
            "points": curve.points,
        }),
    )
}

/// `all`, a split name, or comma-separated sample indices.
fn select_samples(data: &EmbeddingDataset, selector: &str) -> Result<Vec<usize>> {
    if selector == "all" {
        return Ok((0..data.len()).collect());
    }
    if let Ok(tag) = selector.parse::<SplitTag>() {
        return Ok(data.split_indices(tag));
    }
    let List(ids) = selector.parse::<List<usize>>().map_err(|e| {
        CueError::InvalidArgument(format!(
            "--sample {selector:?}: expected all, a split name or indices ({e})"
        ))
    })?;
    Ok(ids)
}

pub fn ufi(r: &mut Resolver) -> Result<()> {
    let data = load_data(r)?;
    let head = load_frozen_head(r)?;
    let model = load_cue(&r.required_path("cue")?)?.0;
    let alpha = r.get("alpha", (model.latent_dim() / 10).max(1))?;
    let selector: String = r.get("sample", "0".to_string())?;
    let out = r.optional::<PathBuf>("out")?;
    warn_unused(r);

    if !data.has_tokens() {
        return Err(CueError::Unsupported(
            "token scoring needs a token table; this dataset has none".into(),
        ));
    }
    let reports = select_samples(&data, &selector)?
        .into_iter()
        .map(|i| run_ufi(&model, &head, &data, i, alpha))
        .collect::<Result<Vec<_>>>()?;
    let doc = json!({ "run_config": r.run_config(), "reports": reports });
    match out {
        Some(path) => write_json(&path, &doc),
        None => print_json(&doc),
    }
}
