use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::CueModel;
use super::objective::{deterministic_loss, grad, CueTrainConfig, LossBreakdown};
use crate::classifier::LinearSoftmaxHead;
use crate::dataset::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::{AdamConfig, AdamState, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueEpoch {
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub train: LossBreakdown,
    /// Deterministic (`z = μ`) loss on the dev split after the epoch.
    pub dev: Option<LossBreakdown>,
}

#[derive(Debug, Clone)]
pub struct CueTraining {
    pub model: CueModel,
    pub trace: Vec<CueEpoch>,
    pub stopped_early: bool,
}

fn split_loss(
    model: &CueModel,
    dataset: &EmbeddingDataset,
    idx: &[usize],
    head: &LinearSoftmaxHead,
    config: &CueTrainConfig,
) -> Result<LossBreakdown> {
    let refs: Vec<&[f64]> = idx.iter().map(|&i| dataset.embedding(i)).collect();
    deterministic_loss(model, &refs, head, config)
}

/// Trains a CUE plug-in between `dataset`'s embeddings and a frozen head.
///
/// The head is only read; its parameter bytes are unchanged afterwards.
pub fn train_cue(
    dataset: &EmbeddingDataset,
    head: &LinearSoftmaxHead,
    config: &CueTrainConfig,
    rng: &mut RngState,
) -> Result<CueTraining> {
    head.ensure_frozen()?;
    config.validate()?;
    let train = dataset.split_indices(SplitTag::Train);
    if train.is_empty() {
        return Err(CueError::Validation("training split is empty".into()));
    }
    if head.embed_dim() != dataset.embed_dim() || head.num_classes() != dataset.num_classes() {
        return Err(invalid_arg!(
            "head shape {}x{} does not match dataset {}x{}",
            head.num_classes(),
            head.embed_dim(),
            dataset.num_classes(),
            dataset.embed_dim()
        ));
    }
    let dev = dataset.split_indices(SplitTag::Dev);

    let mut model = CueModel::init(dataset.embed_dim(), config.latent_dim, config.init_logvar, rng)?;
    let mut params = model.to_flat();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.lr))?;
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let batches = rng.minibatches(&train, config.batch_size);
        let mut mean = LossBreakdown::default();
        for batch in &batches {
            let refs: Vec<&[f64]> = batch.iter().map(|&i| dataset.embedding(i)).collect();
            let (l, g) = grad(&model, &refs, head, rng, config)?;
            if !l.total.is_finite() {
                return Err(CueError::Validation(format!(
                    "CUE loss became non-finite at epoch {epoch}"
                )));
            }
            mean.accumulate(&l, 1.0 / batches.len() as f64);
            adam.step(&mut params, &g.to_flat())?;
            model.set_flat(&params)?;
        }
        let dev_loss = if dev.is_empty() {
            None
        } else {
            Some(split_loss(&model, dataset, &dev, head, config)?)
        };
        log::debug!(
            "cue epoch {epoch}: total {:.6} recon {:.6} kl {:.6} H {:.6} reg {:.6}",
            mean.total,
            mean.recon,
            mean.kl_pred,
            mean.entropy_pred,
            mean.reg
        );
        trace.push(CueEpoch {
            epoch,
            train: mean,
            dev: dev_loss,
        });

        if let (Some(patience), Some(dl)) = (config.patience, dev_loss) {
            if best.as_ref().map_or(true, |(b, _)| dl.total < *b) {
                best = Some((dl.total, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        model.set_flat(&p)?;
    }
    Ok(CueTraining {
        model,
        trace,
        stopped_early,
    })
}

pub const TRACE_CSV_HEADER: &str = "epoch,L_r,KL_pred,H_pred,L_reg,total";

/// Writes the per-epoch training losses as CSV.
pub fn write_trace_csv(trace: &[CueEpoch], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for ep in trace {
        let l = &ep.train;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            ep.epoch, l.recon, l.kl_pred, l.entropy_pred, l.reg, l.total
        )?;
    }
    Ok(())
}
