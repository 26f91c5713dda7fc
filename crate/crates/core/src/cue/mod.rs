//! The CUE plug-in: a Gaussian-reparameterized encoder and a bias-free
//! linear decoder trained against a frozen head so that reconstructions keep
//! the head's prediction while raising its entropy.

mod model;
mod objective;
mod train;

pub use model::{CueModel, Encoding, ReconstructionMode, LOGVAR_CLAMP};
pub use objective::{
    batch_loss_with_noise, deterministic_loss, draw_noise, grad, grad_with_noise, loss,
    CueGradient, CueTrainConfig, LossBreakdown, Regularizer,
};
pub use train::{train_cue, write_trace_csv, CueEpoch, CueTraining, TRACE_CSV_HEADER};
