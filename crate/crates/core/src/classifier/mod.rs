//! The frozen linear-softmax head and its uncertainty baselines: label
//! smoothing (via [`HeadTrainConfig::label_smoothing`]), MC dropout at the
//! embedding boundary, and a Bayesian-linear plug-in.

mod bnn;
mod head;

pub use bnn::{
    predict_bnn, softplus_inv, train_bnn_plugin, BayesLinearPlugin, BnnTraining, BnnTrainConfig,
};
pub use head::{
    predict_mc_dropout, smoothed_target, train_head, HeadEpoch, HeadTrainConfig, HeadTraining,
    LinearSoftmaxHead,
};
