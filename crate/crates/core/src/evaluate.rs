//! Split-level predictions for each uncertainty variant.
//!
//! `Smoothed` evaluates exactly like `Base`: label smoothing lives in how the
//! head was trained, so the caller passes the smoothed head.

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_bnn, predict_mc_dropout, BayesLinearPlugin, LinearSoftmaxHead};
use crate::cue::{CueModel, ReconstructionMode};
use crate::dataset::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::metrics::{CalibrationReport, PredictionSet, ReportOptions};
use crate::numerics::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Base,
    Smoothed,
    McDropout,
    Bnn,
    Cue,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Smoothed => "smoothed",
            Variant::McDropout => "mc_dropout",
            Variant::Bnn => "bnn",
            Variant::Cue => "cue",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "smoothed" => Ok(Variant::Smoothed),
            "mc_dropout" | "mc-dropout" => Ok(Variant::McDropout),
            "bnn" => Ok(Variant::Bnn),
            "cue" => Ok(Variant::Cue),
            other => Err(invalid_arg!(
                "unknown variant {other:?}, expected base, smoothed, mc_dropout, bnn or cue"
            )),
        }
    }
}

/// A trained plug-in sitting between the embeddings and the head.
#[derive(Debug, Clone, Copy)]
pub enum Plugin<'a> {
    None,
    Cue(&'a CueModel),
    Bnn(&'a BayesLinearPlugin),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mc_passes: usize,
    pub dropout_rate: f64,
    pub cue_mode: ReconstructionMode,
    pub report: ReportOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mc_passes: 16,
            dropout_rate: 0.1,
            cue_mode: ReconstructionMode::Deterministic,
            report: ReportOptions::default(),
        }
    }
}

/// Predictions of `variant` on every sample of `split`, in index order.
pub fn predict_split(
    head: &LinearSoftmaxHead,
    plugin: Plugin<'_>,
    variant: Variant,
    dataset: &EmbeddingDataset,
    split: SplitTag,
    options: &EvalOptions,
    rng: &mut RngState,
) -> Result<PredictionSet> {
    head.ensure_frozen()?;
    let idx = dataset.split_indices(split);
    if idx.is_empty() {
        return Err(CueError::Validation(format!("{} split is empty", split.as_str())));
    }
    let probs = idx
        .iter()
        .map(|&i| {
            let e = dataset.embedding(i);
            match (variant, plugin) {
                (Variant::Base | Variant::Smoothed, _) => head.predict(e),
                (Variant::McDropout, _) => {
                    predict_mc_dropout(head, e, options.dropout_rate, options.mc_passes, rng)
                }
                (Variant::Bnn, Plugin::Bnn(p)) => predict_bnn(p, head, e, options.mc_passes, rng),
                (Variant::Cue, Plugin::Cue(m)) => head.predict(&m.reconstruct(e, options.cue_mode, rng)?),
                (v, _) => Err(invalid_arg!("variant {} needs its plug-in checkpoint", v.as_str())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(probs, idx.iter().map(|&i| dataset.label(i)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub variant: Variant,
    pub split: SplitTag,
    pub report: CalibrationReport,
}

pub fn evaluate(
    head: &LinearSoftmaxHead,
    plugin: Plugin<'_>,
    variant: Variant,
    dataset: &EmbeddingDataset,
    split: SplitTag,
    options: &EvalOptions,
    rng: &mut RngState,
) -> Result<Evaluation> {
    let preds = predict_split(head, plugin, variant, dataset, split, options, rng)?;
    Ok(Evaluation {
        variant,
        split,
        report: CalibrationReport::compute(&preds, &options.report)?,
    })
}
