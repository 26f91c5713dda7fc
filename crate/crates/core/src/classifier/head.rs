use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::{
    log_softmax, softmax_in_place, AdamConfig, AdamState, DenseMatrix, RngState,
};

/// Linear-softmax classifier `softmax(W e + b)`.
///
/// A frozen head cannot be mutated through its public API; CUE and BNN
/// training only ever borrow it immutably and insist that it is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxHead {
    weights: DenseMatrix,
    bias: Vec<f64>,
    frozen: bool,
}

impl LinearSoftmaxHead {
    /// Zero-initialized, trainable head.
    pub fn zeros(num_classes: usize, embed_dim: usize) -> Self {
        Self {
            weights: DenseMatrix::zeros(num_classes, embed_dim),
            bias: vec![0.0; num_classes],
            frozen: false,
        }
    }

    /// Trainable head from explicit parameters.
    pub fn from_parts(weights: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() || weights.rows() < 2 || weights.cols() == 0 {
            return Err(invalid_arg!(
                "head weights {:?} incompatible with bias of length {}",
                weights.shape(),
                bias.len()
            ));
        }
        if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(invalid_arg!("head parameters must be finite"));
        }
        Ok(Self {
            weights,
            bias,
            frozen: false,
        })
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn ensure_frozen(&self) -> Result<()> {
        if self.frozen {
            Ok(())
        } else {
            Err(CueError::Contract(
                "the classification head must be frozen before plug-in training or evaluation"
                    .into(),
            ))
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Little-endian bytes of all parameters, for byte-level comparison.
    pub fn param_bytes(&self) -> Vec<u8> {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    /// Parameters as one flat vector: weights row-major, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.as_slice().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn from_flat(num_classes: usize, embed_dim: usize, flat: &[f64]) -> Result<Self> {
        let nw = num_classes * embed_dim;
        if flat.len() != nw + num_classes {
            return Err(invalid_arg!("flat head parameters have wrong length {}", flat.len()));
        }
        Self::from_parts(
            DenseMatrix::from_vec(num_classes, embed_dim, flat[..nw].to_vec())?,
            flat[nw..].to_vec(),
        )
    }

    fn check_dim(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.embed_dim() {
            return Err(invalid_arg!(
                "embedding of length {} passed to a head over {} dimensions",
                e.len(),
                self.embed_dim()
            ));
        }
        Ok(())
    }

    pub fn logits(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(e)?;
        Ok(self.logits_unchecked(e))
    }

    pub(crate) fn logits_unchecked(&self, e: &[f64]) -> Vec<f64> {
        let mut z = self.weights.matvec_unchecked(e);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    pub fn predict(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(e)?;
        Ok(self.predict_unchecked(e))
    }

    pub(crate) fn predict_unchecked(&self, e: &[f64]) -> Vec<f64> {
        let mut p = self.logits_unchecked(e);
        softmax_in_place(&mut p);
        p
    }

    /// Mean cross-entropy against soft `targets` and its gradient with
    /// respect to [`to_flat`](Self::to_flat) parameters.
    pub fn cross_entropy_grad(&self, inputs: &[&[f64]], targets: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(invalid_arg!("need equal, non-zero numbers of inputs and targets"));
        }
        let k = self.num_classes();
        let d = self.embed_dim();
        let scale = 1.0 / inputs.len() as f64;
        let mut gw = DenseMatrix::zeros(k, d);
        let mut gb = vec![0.0; k];
        let mut loss = 0.0;
        for (e, t) in inputs.iter().zip(targets) {
            self.check_dim(e)?;
            if t.len() != k {
                return Err(invalid_arg!("target of length {} for {k} classes", t.len()));
            }
            let logp = log_softmax(&self.logits_unchecked(e));
            loss -= t.iter().zip(&logp).map(|(ti, li)| ti * li).sum::<f64>();
            let g: Vec<f64> = logp
                .iter()
                .zip(t)
                .map(|(li, ti)| scale * (li.exp() - ti))
                .collect();
            gw.add_outer(1.0, &g, e);
            for (b, gi) in gb.iter_mut().zip(&g) {
                *b += gi;
            }
        }
        let mut flat = gw.into_vec();
        flat.extend(gb);
        Ok((loss * scale, flat))
    }
}

/// `(1 − ε)·onehot(label) + ε/K`.
pub fn smoothed_target(label: usize, num_classes: usize, epsilon: f64) -> Vec<f64> {
    let floor = epsilon / num_classes as f64;
    (0..num_classes)
        .map(|k| if k == label { 1.0 - epsilon + floor } else { floor })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub label_smoothing: f64,
    /// Inverted dropout on input coordinates during training.
    pub dropout: f64,
    /// Stop after this many epochs without dev-loss improvement and keep the
    /// best parameters. `None` disables early stopping.
    pub patience: Option<usize>,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            epochs: 20,
            batch_size: 16,
            label_smoothing: 0.0,
            dropout: 0.0,
            patience: None,
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid_arg!("learning rate must be finite and >= 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid_arg!("epochs and batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(invalid_arg!("label smoothing must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid_arg!("dropout rate must lie in [0, 1)"));
        }
        if self.patience == Some(0) {
            return Err(invalid_arg!("early-stop patience must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadTraining {
    /// The trained head, frozen.
    pub head: LinearSoftmaxHead,
    /// Training loss of the zero-initialized head.
    pub initial_loss: f64,
    pub history: Vec<HeadEpoch>,
    pub stopped_early: bool,
}

fn mean_loss(head: &LinearSoftmaxHead, ds: &EmbeddingDataset, idx: &[usize], eps: f64) -> f64 {
    let k = head.num_classes();
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let logp = log_softmax(&head.logits_unchecked(ds.embedding(i)));
            let t = smoothed_target(ds.label(i), k, eps);
            -t.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum();
    total / idx.len() as f64
}

/// Zeroes each coordinate with probability `rate` and rescales survivors.
pub(crate) fn inverted_dropout(e: &[f64], rate: f64, rng: &mut RngState) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    e.iter()
        .map(|&v| if rng.bernoulli(rate) { 0.0 } else { v * keep })
        .collect()
}

/// Trains a zero-initialized head with Adam on mean cross-entropy against
/// (optionally smoothed) targets and returns it frozen.
pub fn train_head(dataset: &EmbeddingDataset, config: &HeadTrainConfig, rng: &mut RngState) -> Result<HeadTraining> {
    config.validate()?;
    let train = dataset.split_indices(SplitTag::Train);
    if train.is_empty() {
        return Err(CueError::Validation("training split is empty".into()));
    }
    let dev = dataset.split_indices(SplitTag::Dev);
    let (k, d) = (dataset.num_classes(), dataset.embed_dim());
    let eps = config.label_smoothing;

    let mut head = LinearSoftmaxHead::zeros(k, d);
    let mut params = head.to_flat();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.lr))?;
    let initial_loss = mean_loss(&head, dataset, &train, eps);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        for batch in rng.minibatches(&train, config.batch_size) {
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    let e = dataset.embedding(i);
                    if config.dropout > 0.0 {
                        inverted_dropout(e, config.dropout, rng)
                    } else {
                        e.to_vec()
                    }
                })
                .collect();
            let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            let targets: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| smoothed_target(dataset.label(i), k, eps))
                .collect();
            let (_, grad) = head.cross_entropy_grad(&refs, &targets)?;
            adam.step(&mut params, &grad)?;
            head = LinearSoftmaxHead::from_flat(k, d, &params)?;
        }

        let train_loss = mean_loss(&head, dataset, &train, eps);
        let dev_loss = (!dev.is_empty()).then(|| mean_loss(&head, dataset, &dev, eps));
        log::debug!("head epoch {epoch}: train {train_loss:.6} dev {dev_loss:?}");
        history.push(HeadEpoch {
            epoch,
            train_loss,
            dev_loss,
        });

        if let (Some(patience), Some(dl)) = (config.patience, dev_loss) {
            if best.as_ref().map_or(true, |(b, _)| dl < *b) {
                best = Some((dl, params.clone()));
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
        head = LinearSoftmaxHead::from_flat(k, d, &p)?;
    }
    Ok(HeadTraining {
        head: head.freeze(),
        initial_loss,
        history,
        stopped_early,
    })
}

/// Mean of `passes` softmax outputs under inverted input dropout,
/// renormalized to sum to one.
pub fn predict_mc_dropout(
    head: &LinearSoftmaxHead,
    e: &[f64],
    rate: f64,
    passes: usize,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(invalid_arg!("dropout rate must lie in (0, 1), got {rate}"));
    }
    if passes == 0 {
        return Err(invalid_arg!("MC dropout needs at least one pass"));
    }
    head.check_dim(e)?;
    let mut mean = vec![0.0; head.num_classes()];
    for _ in 0..passes {
        let p = head.predict_unchecked(&inverted_dropout(e, rate, rng));
        for (m, pi) in mean.iter_mut().zip(&p) {
            *m += pi;
        }
    }
    let total: f64 = mean.iter().sum();
    mean.iter_mut().for_each(|m| *m /= total);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error};

    #[test]
    fn zero_head_is_uniform() {
        let head = LinearSoftmaxHead::zeros(4, 3);
        assert_eq!(head.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn bias_only_closed_form() {
        let head =
            LinearSoftmaxHead::from_parts(DenseMatrix::zeros(2, 2), vec![2f64.ln(), 0.0]).unwrap();
        let p = head.predict(&[5.0, -1.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(head.predict(&[1.0]).is_err());
    }

    #[test]
    fn frozen_predictions_repeat() {
        let w = DenseMatrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]).unwrap();
        let head = LinearSoftmaxHead::from_parts(w, vec![0.1, -0.2]).unwrap().freeze();
        assert!(head.is_frozen());
        assert_eq!(head.predict(&[1.0, 2.0]).unwrap(), head.predict(&[1.0, 2.0]).unwrap());
    }

    #[test]
    fn smoothing_formula() {
        let t = smoothed_target(0, 2, 0.1);
        assert!((t[0] - 0.95).abs() < 1e-15 && (t[1] - 0.05).abs() < 1e-15);
        assert_eq!(smoothed_target(1, 3, 0.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = RngState::new(17);
        let (k, d) = (3, 4);
        let flat: Vec<f64> = (0..k * d + k).map(|_| rng.normal()).collect();
        let head = LinearSoftmaxHead::from_flat(k, d, &flat).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let ts: Vec<Vec<f64>> = (0..5).map(|i| smoothed_target(i % k, k, 0.1)).collect();
        let (_, analytic) = head.cross_entropy_grad(&refs, &ts).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                LinearSoftmaxHead::from_flat(k, d, p)
                    .unwrap()
                    .cross_entropy_grad(&refs, &ts)
                    .unwrap()
                    .0
            },
            &flat,
            1e-5,
        );
        assert!(max_relative_error(&analytic, &numeric, 1e-6) <= 1e-4);
    }

    #[test]
    fn mc_dropout_limits_and_validation() {
        let w = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-0.5, 2.0]]).unwrap();
        let head = LinearSoftmaxHead::from_parts(w, vec![0.0, 0.3]).unwrap().freeze();
        let e = [0.7, -0.2];
        let exact = head.predict(&e).unwrap();
        let mc = predict_mc_dropout(&head, &e, 1e-9, 8, &mut RngState::new(1)).unwrap();
        assert!(exact.iter().zip(&mc).all(|(a, b)| (a - b).abs() < 1e-6));
        let a = predict_mc_dropout(&head, &e, 0.3, 1, &mut RngState::new(2)).unwrap();
        let b = predict_mc_dropout(&head, &e, 0.3, 1, &mut RngState::new(2)).unwrap();
        assert_eq!(a, b);
        let m = predict_mc_dropout(&head, &e, 0.5, 16, &mut RngState::new(3)).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(predict_mc_dropout(&head, &e, 0.0, 4, &mut RngState::new(0)).is_err());
        assert!(predict_mc_dropout(&head, &e, 1.0, 4, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_uniform_head() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let ds = EmbeddingDataset::new(x, vec![0, 1, 1], 2, None, None).unwrap();
        let cfg = HeadTrainConfig {
            lr: 0.0,
            epochs: 2,
            ..HeadTrainConfig::default()
        };
        let out = train_head(&ds, &cfg, &mut RngState::new(0)).unwrap();
        assert!(out.head.is_frozen());
        assert_eq!(out.head.predict(&[3.0, -2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let ds = EmbeddingDataset::new(x, vec![0, 1], 2, None, None)
            .unwrap()
            .with_splits(vec![SplitTag::Test; 2])
            .unwrap();
        let err = train_head(&ds, &HeadTrainConfig::default(), &mut RngState::new(0)).unwrap_err();
        assert_eq!(err.category(), "validation");
    }
}
