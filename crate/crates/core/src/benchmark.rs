//! The synthetic benchmark: a four-class Gaussian mixture with ambiguous
//! samples and planted cue tokens, an overfit head, and a CUE plug-in
//! trained on top.

use serde::{Deserialize, Serialize};

use crate::classifier::{train_head, HeadTrainConfig, LinearSoftmaxHead};
use crate::cue::{train_cue, CueTrainConfig, CueTraining, Regularizer};
use crate::dataset::{split, synth_with_truth, SyntheticConfig, SyntheticData};
use crate::error::Result;
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub synthetic: SyntheticConfig,
    pub split: (f64, f64, f64),
    pub head: HeadTrainConfig,
    pub cue: CueTrainConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig {
                ambiguous_position: 0.35,
                ambiguous_label_flip: 0.35,
                common_offset: 5.0,
                ..SyntheticConfig::default()
            },
            // A small training split lets the head overfit.
            split: (0.3, 0.2, 0.5),
            head: HeadTrainConfig {
                lr: 0.05,
                epochs: 100,
                batch_size: 16,
                ..HeadTrainConfig::default()
            },
            cue: CueTrainConfig {
                gammas: [0.05, 1.0, 1.0, 0.1],
                regularizer: Regularizer::Orthogonality,
                latent_dim: 100,
                lr: 3e-3,
                epochs: 200,
                batch_size: 16,
                init_logvar: -4.0,
                ..CueTrainConfig::default()
            },
        }
    }
}

pub struct BenchmarkRun {
    /// Split dataset with its generating truth.
    pub data: SyntheticData,
    pub head: LinearSoftmaxHead,
    pub cue: CueTraining,
}

/// Generates, splits, trains the head and then the plug-in, each phase on
/// its own stream of `seed`.
pub fn run_benchmark(config: &BenchmarkConfig, seed: u64) -> Result<BenchmarkRun> {
    let root = RngState::new(seed);
    let mut data = synth_with_truth(&config.synthetic, &mut root.fork(0))?;
    data.dataset = split(data.dataset, config.split, &mut root.fork(1))?;
    let head = train_head(&data.dataset, &config.head, &mut root.fork(2))?.head;
    let cue = train_cue(&data.dataset, &head, &config.cue, &mut root.fork(3))?;
    Ok(BenchmarkRun { data, head, cue })
}
