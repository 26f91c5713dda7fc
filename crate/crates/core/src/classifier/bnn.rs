//! Bayesian-linear plug-in baseline.
//!
//! A Bayes-by-backprop linear encoder (mean-field Gaussian weights,
//! `σ = softplus(ρ)`) feeds a deterministic bias-free linear decoder, whose
//! output goes through the frozen head. Training minimizes mean
//! cross-entropy plus `β` times the closed-form KL divergence from the weight
//! posterior to `N(0, σ_prior²)`. One weight sample is drawn per minibatch.

use serde::{Deserialize, Serialize};

use super::head::LinearSoftmaxHead;
use crate::dataset::{EmbeddingDataset, SplitTag};
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::{log_softmax, AdamConfig, AdamState, DenseMatrix, RngState};

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of softplus, for initializing `ρ` from a target `σ`.
pub fn softplus_inv(sigma: f64) -> f64 {
    if sigma > 30.0 {
        sigma
    } else {
        sigma.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearPlugin {
    pub(crate) w_mu: DenseMatrix,
    pub(crate) w_rho: DenseMatrix,
    pub(crate) b_mu: Vec<f64>,
    pub(crate) b_rho: Vec<f64>,
    pub(crate) decoder: DenseMatrix,
    pub(crate) prior_sigma: f64,
}

struct SampledWeights {
    w: DenseMatrix,
    b: Vec<f64>,
    eps_w: Vec<f64>,
    eps_b: Vec<f64>,
}

impl BayesLinearPlugin {
    pub fn from_parts(
        w_mu: DenseMatrix,
        w_rho: DenseMatrix,
        b_mu: Vec<f64>,
        b_rho: Vec<f64>,
        decoder: DenseMatrix,
        prior_sigma: f64,
    ) -> Result<Self> {
        let (dim, d) = w_mu.shape();
        if w_rho.shape() != (dim, d)
            || b_mu.len() != dim
            || b_rho.len() != dim
            || decoder.shape() != (d, dim)
        {
            return Err(invalid_arg!("inconsistent Bayesian plug-in shapes"));
        }
        if !(prior_sigma > 0.0) {
            return Err(invalid_arg!("prior sigma must be positive"));
        }
        Ok(Self {
            w_mu,
            w_rho,
            b_mu,
            b_rho,
            decoder,
            prior_sigma,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.w_mu.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_mu.rows()
    }

    pub fn prior_sigma(&self) -> f64 {
        self.prior_sigma
    }

    /// Tensors in checkpoint order: `w_mu, w_rho, b_mu, b_rho, decoder`.
    pub fn tensors(&self) -> Vec<DenseMatrix> {
        let dim = self.latent_dim();
        vec![
            self.w_mu.clone(),
            self.w_rho.clone(),
            DenseMatrix::from_vec(1, dim, self.b_mu.clone()).expect("bias shape"),
            DenseMatrix::from_vec(1, dim, self.b_rho.clone()).expect("bias shape"),
            self.decoder.clone(),
        ]
    }

    pub fn from_tensors(mut t: Vec<DenseMatrix>, prior_sigma: f64) -> Result<Self> {
        if t.len() != 5 {
            return Err(invalid_arg!("Bayesian plug-in needs 5 tensors, got {}", t.len()));
        }
        let decoder = t.pop().expect("len 5");
        let b_rho = t.pop().expect("len 5").into_vec();
        let b_mu = t.pop().expect("len 5").into_vec();
        let w_rho = t.pop().expect("len 5");
        let w_mu = t.pop().expect("len 5");
        Self::from_parts(w_mu, w_rho, b_mu, b_rho, decoder, prior_sigma)
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [
            self.w_mu.as_slice(),
            self.w_rho.as_slice(),
            &self.b_mu,
            &self.b_rho,
            self.decoder.as_slice(),
        ] {
            v.extend_from_slice(part);
        }
        v
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for part in [
            self.w_mu.as_mut_slice(),
            self.w_rho.as_mut_slice(),
            &mut self.b_mu,
            &mut self.b_rho,
            self.decoder.as_mut_slice(),
        ] {
            let n = part.len();
            part.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    fn sample(&self, rng: &mut RngState) -> SampledWeights {
        let mut eps_w = vec![0.0; self.w_mu.as_slice().len()];
        let mut eps_b = vec![0.0; self.b_mu.len()];
        rng.fill_normal(&mut eps_w);
        rng.fill_normal(&mut eps_b);
        let mut w = self.w_mu.clone();
        for ((wi, &r), &ep) in w.as_mut_slice().iter_mut().zip(self.w_rho.as_slice()).zip(&eps_w) {
            *wi += softplus(r) * ep;
        }
        let b = self
            .b_mu
            .iter()
            .zip(&self.b_rho)
            .zip(&eps_b)
            .map(|((m, &r), ep)| m + softplus(r) * ep)
            .collect();
        SampledWeights { w, b, eps_w, eps_b }
    }

    fn forward(&self, w: &DenseMatrix, b: &[f64], e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = w.matvec_unchecked(e);
        for (hi, bi) in h.iter_mut().zip(b) {
            *hi += bi;
        }
        let out = self.decoder.matvec_unchecked(&h);
        (h, out)
    }

    /// Reconstruction with posterior-mean weights.
    pub fn reconstruct_mean(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.embed_dim() {
            return Err(invalid_arg!("embedding length {} != {}", e.len(), self.embed_dim()));
        }
        Ok(self.forward(&self.w_mu, &self.b_mu, e).1)
    }

    /// Closed-form `KL(q(w) ‖ N(0, σ_prior²))` summed over every encoder weight.
    pub fn weight_kl(&self) -> f64 {
        let sp = self.prior_sigma;
        let kl = |mu: f64, rho: f64| {
            let s = softplus(rho);
            (sp / s).ln() + (s * s + mu * mu) / (2.0 * sp * sp) - 0.5
        };
        let w: f64 = self
            .w_mu
            .as_slice()
            .iter()
            .zip(self.w_rho.as_slice())
            .map(|(&m, &r)| kl(m, r))
            .sum();
        let b: f64 = self.b_mu.iter().zip(&self.b_rho).map(|(&m, &r)| kl(m, r)).sum();
        w + b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnTrainConfig {
    pub latent_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub prior_sigma: f64,
    /// Weight on the summed weight KL.
    pub beta: f64,
    /// Initial posterior standard deviation of every encoder weight.
    pub init_sigma: f64,
    /// When false, `ρ` stays at its initial value.
    pub learn_sigma: bool,
    /// Stochastic passes averaged at inference.
    pub passes: usize,
}

impl Default for BnnTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            lr: 1e-3,
            epochs: 20,
            batch_size: 16,
            prior_sigma: 1.0,
            beta: 1e-4,
            init_sigma: 1e-2,
            learn_sigma: true,
            passes: 16,
        }
    }
}

impl BnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 || self.passes == 0 {
            return Err(invalid_arg!(
                "latent dim, epochs, batch size and passes must be at least 1"
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.beta >= 0.0) {
            return Err(invalid_arg!("learning rate and beta must be >= 0"));
        }
        if !(self.prior_sigma > 0.0) || !(self.init_sigma > 0.0) {
            return Err(invalid_arg!("prior and initial sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BnnTraining {
    pub plugin: BayesLinearPlugin,
    /// Mean minibatch objective per epoch.
    pub losses: Vec<f64>,
}

/// Trains the plug-in against a frozen head; the head is only read.
pub fn train_bnn_plugin(
    dataset: &EmbeddingDataset,
    head: &LinearSoftmaxHead,
    config: &BnnTrainConfig,
    rng: &mut RngState,
) -> Result<BnnTraining> {
    head.ensure_frozen()?;
    config.validate()?;
    let train = dataset.split_indices(SplitTag::Train);
    if train.is_empty() {
        return Err(CueError::Validation("training split is empty".into()));
    }
    let d = dataset.embed_dim();
    if head.embed_dim() != d {
        return Err(invalid_arg!("head expects {} dims, dataset has {d}", head.embed_dim()));
    }
    let dim = config.latent_dim;
    let rho0 = softplus_inv(config.init_sigma);
    let enc_scale = 1.0 / (d as f64).sqrt();
    let dec_scale = 1.0 / (dim as f64).sqrt();
    let mut plugin = BayesLinearPlugin {
        w_mu: DenseMatrix::from_fn(dim, d, |_, _| enc_scale * rng.normal()),
        w_rho: DenseMatrix::from_fn(dim, d, |_, _| rho0),
        b_mu: vec![0.0; dim],
        b_rho: vec![rho0; dim],
        decoder: DenseMatrix::from_fn(d, dim, |_, _| dec_scale * rng.normal()),
        prior_sigma: config.prior_sigma,
    };
    let mut params = plugin.flat();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.lr))?;
    let nw = dim * d;
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        let batches = rng.minibatches(&train, config.batch_size);
        for batch in &batches {
            let sw = plugin.sample(rng);
            let scale = 1.0 / batch.len() as f64;
            let mut g_w = DenseMatrix::zeros(dim, d);
            let mut g_b = vec![0.0; dim];
            let mut g_dec = DenseMatrix::zeros(d, dim);
            let mut ce = 0.0;
            for &i in batch {
                let e = dataset.embedding(i);
                let (h, out) = plugin.forward(&sw.w, &sw.b, e);
                let logp = log_softmax(&head.logits_unchecked(&out));
                let y = dataset.label(i);
                ce -= logp[y];
                let mut g_logit: Vec<f64> = logp.iter().map(|l| scale * l.exp()).collect();
                g_logit[y] -= scale;
                let g_out = head.weights().transpose_matvec_unchecked(&g_logit);
                g_dec.add_outer(1.0, &g_out, &h);
                let g_h = plugin.decoder.transpose_matvec_unchecked(&g_out);
                g_w.add_outer(1.0, &g_h, e);
                for (gb, gh) in g_b.iter_mut().zip(&g_h) {
                    *gb += gh;
                }
            }
            let loss = ce * scale + config.beta * plugin.weight_kl();
            epoch_loss += loss;

            let sp2 = config.prior_sigma * config.prior_sigma;
            let mut grad = vec![0.0; params.len()];
            let (gw_mu, rest) = grad.split_at_mut(nw);
            let (gw_rho, rest) = rest.split_at_mut(nw);
            let (gb_mu, rest) = rest.split_at_mut(dim);
            let (gb_rho, g_dec_out) = rest.split_at_mut(dim);
            let fill = |g_mu: &mut [f64], g_rho: &mut [f64], g: &[f64], eps: &[f64], mu: &[f64], rho: &[f64]| {
                for j in 0..g.len() {
                    let s = softplus(rho[j]);
                    let ds_drho = sigmoid(rho[j]);
                    g_mu[j] = g[j] + config.beta * mu[j] / sp2;
                    if config.learn_sigma {
                        let dkl_ds = -1.0 / s + s / sp2;
                        g_rho[j] = (g[j] * eps[j] + config.beta * dkl_ds) * ds_drho;
                    }
                }
            };
            fill(gw_mu, gw_rho, g_w.as_slice(), &sw.eps_w, plugin.w_mu.as_slice(), plugin.w_rho.as_slice());
            fill(gb_mu, gb_rho, &g_b, &sw.eps_b, &plugin.b_mu, &plugin.b_rho);
            g_dec_out.copy_from_slice(g_dec.as_slice());

            adam.step(&mut params, &grad)?;
            plugin.set_flat(&params);
        }
        let mean = epoch_loss / batches.len() as f64;
        if !mean.is_finite() {
            return Err(CueError::Validation(format!(
                "Bayesian plug-in loss diverged at epoch {epoch}"
            )));
        }
        log::debug!("bnn epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok(BnnTraining { plugin, losses })
}

/// Mean prediction over `passes` independent weight samples.
pub fn predict_bnn(
    plugin: &BayesLinearPlugin,
    head: &LinearSoftmaxHead,
    e: &[f64],
    passes: usize,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    if passes == 0 {
        return Err(invalid_arg!("BNN inference needs at least one pass"));
    }
    if e.len() != plugin.embed_dim() || head.embed_dim() != plugin.embed_dim() {
        return Err(invalid_arg!("embedding length {} != {}", e.len(), plugin.embed_dim()));
    }
    let mut mean = vec![0.0; head.num_classes()];
    for _ in 0..passes {
        let sw = plugin.sample(rng);
        let (_, out) = plugin.forward(&sw.w, &sw.b, e);
        for (m, p) in mean.iter_mut().zip(head.predict_unchecked(&out)) {
            *m += p;
        }
    }
    let total: f64 = mean.iter().sum();
    mean.iter_mut().for_each(|m| *m /= total);
    Ok(mean)
}
