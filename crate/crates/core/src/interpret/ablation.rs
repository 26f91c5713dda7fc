//! Latent-dimension removal.
//!
//! Latent dimensions are ranked by influence score and cut into `B` equal
//! bins, bin 0 holding the most influential dimensions. Removing a bin sets
//! those coordinates of `z = μ(e)` to zero and re-predicts through the
//! decoder and the frozen head. Per-sample rankings are turned into one
//! ranking for the whole split by averaging ranks (or scores), or used as-is
//! per sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ufi::{dim_scores, rank_descending};
use crate::classifier::LinearSoftmaxHead;
use crate::cue::CueModel;
use crate::dataset::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::metrics::{CalibrationReport, PredictionSet, ReportOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// Remove one bin at a time.
    #[default]
    PerBin,
    /// Remove bins `0..=b`.
    Cumulative,
}

impl std::str::FromStr for AblationMode {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perbin" | "per-bin" => Ok(AblationMode::PerBin),
            "cumulative" => Ok(AblationMode::Cumulative),
            other => Err(invalid_arg!("unknown ablation mode {other:?}, expected perbin or cumulative")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankAggregation {
    /// Order dimensions by their mean per-sample rank.
    #[default]
    MeanRank,
    /// Order dimensions by their mean per-sample score.
    MeanScore,
    /// Each sample removes bins of its own ranking.
    PerSample,
}

impl std::str::FromStr for RankAggregation {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_rank" | "mean-rank" => Ok(RankAggregation::MeanRank),
            "mean_score" | "mean-score" => Ok(RankAggregation::MeanScore),
            "per_sample" | "per-sample" => Ok(RankAggregation::PerSample),
            other => Err(invalid_arg!("unknown rank aggregation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub bins: usize,
    pub mode: AblationMode,
    pub aggregation: RankAggregation,
    pub report: ReportOptions,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            bins: 10,
            mode: AblationMode::PerBin,
            aggregation: RankAggregation::MeanRank,
            report: ReportOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub bin: usize,
    pub cumulative: bool,
    /// Dimensions zeroed for every sample; empty under per-sample rankings.
    pub removed_dims: Vec<usize>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub avg_entropy: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub config: AblationConfig,
    /// Metrics of the unablated reconstruction.
    pub baseline: CalibrationReport,
    /// Split-level dimension order; `None` under per-sample rankings.
    pub order: Option<Vec<usize>>,
    pub points: Vec<AblationPoint>,
}

/// Split-level dimension order from per-sample scores.
pub fn aggregate_order(scores: &[Vec<f64>], aggregation: RankAggregation) -> Result<Vec<usize>> {
    let dim = scores.first().map_or(0, Vec::len);
    let n = scores.len() as f64;
    match aggregation {
        RankAggregation::MeanScore => {
            let mut mean = vec![0.0; dim];
            for s in scores {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v / n;
                }
            }
            Ok(rank_descending(&mean))
        }
        RankAggregation::MeanRank => {
            let mut mean = vec![0.0; dim];
            for s in scores {
                for (rank, d) in rank_descending(s).into_iter().enumerate() {
                    mean[d] += rank as f64 / n;
                }
            }
            let neg: Vec<f64> = mean.iter().map(|v| -v).collect();
            Ok(rank_descending(&neg))
        }
        RankAggregation::PerSample => Err(invalid_arg!("per-sample rankings have no split-level order")),
    }
}

fn bins_to_remove(b: usize, mode: AblationMode) -> std::ops::RangeInclusive<usize> {
    match mode {
        AblationMode::PerBin => b..=b,
        AblationMode::Cumulative => 0..=b,
    }
}

fn predict_masked(
    model: &CueModel,
    head: &LinearSoftmaxHead,
    z: &[f64],
    removed: &[usize],
) -> Result<Vec<f64>> {
    let mut z = z.to_vec();
    for &d in removed {
        z[d] = 0.0;
    }
    head.predict(&model.decode(&z)?)
}

pub fn ablate_dims(
    model: &CueModel,
    head: &LinearSoftmaxHead,
    dataset: &EmbeddingDataset,
    split: SplitTag,
    config: &AblationConfig,
) -> Result<AblationCurve> {
    head.ensure_frozen()?;
    let dim = model.latent_dim();
    if config.bins == 0 || dim % config.bins != 0 {
        return Err(CueError::Validation(format!(
            "{} bins do not divide {dim} latent dimensions",
            config.bins
        )));
    }
    let idx = dataset.split_indices(split);
    if idx.is_empty() {
        return Err(CueError::Validation(format!("{} split is empty", split.as_str())));
    }
    let width = dim / config.bins;
    let labels: Vec<usize> = idx.iter().map(|&i| dataset.label(i)).collect();

    let attributions = idx
        .iter()
        .map(|&i| dim_scores(model, dataset.embedding(i)))
        .collect::<Result<Vec<_>>>()?;
    let baseline_probs = attributions
        .iter()
        .map(|a| head.predict(&a.reconstruction))
        .collect::<Result<Vec<_>>>()?;
    let baseline = CalibrationReport::compute(
        &PredictionSet::new(baseline_probs, labels.clone())?,
        &config.report,
    )?;

    let order = match config.aggregation {
        RankAggregation::PerSample => None,
        agg => {
            let scores: Vec<Vec<f64>> = attributions.iter().map(|a| a.raw_scores.clone()).collect();
            Some(aggregate_order(&scores, agg)?)
        }
    };

    let mut points = Vec::with_capacity(config.bins);
    for b in 0..config.bins {
        let range = bins_to_remove(b, config.mode);
        let slot = |ranking: &[usize]| -> Vec<usize> {
            ranking[range.start() * width..(range.end() + 1) * width].to_vec()
        };
        let removed_global = order.as_deref().map(slot);
        let probs = attributions
            .iter()
            .map(|a| {
                let removed = match &removed_global {
                    Some(r) => r.clone(),
                    None => slot(&a.ranked.iter().map(|s| s.dim).collect::<Vec<_>>()),
                };
                predict_masked(model, head, &a.z, &removed)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = CalibrationReport::compute(&PredictionSet::new(probs, labels.clone())?, &config.report)?;
        points.push(AblationPoint {
            bin: b,
            cumulative: config.mode == AblationMode::Cumulative,
            removed_dims: removed_global.unwrap_or_default(),
            accuracy: report.accuracy,
            macro_f1: report.macro_f1,
            avg_entropy: report.avg_entropy,
            ece: report.ece,
        });
    }
    Ok(AblationCurve {
        config: *config,
        baseline,
        order,
        points,
    })
}

pub const ABLATION_CSV_HEADER: &str = "bin,acc,f1,entropy,ece";

pub fn write_ablation_csv(curve: &AblationCurve, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{ABLATION_CSV_HEADER}")?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.bin, p.accuracy, p.macro_f1, p.avg_entropy, p.ece
        )?;
    }
    Ok(())
}
