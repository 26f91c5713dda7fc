//! The four-term CUE objective and its reparameterized gradient.
//!
//! For an embedding `e` with frozen-head prediction `ŷ` and reconstruction
//! `e′ = W_θ z` with prediction `ŷ′`:
//!
//! ```text
//! total = γ1 ‖e′ − e‖² + γ2 KL(ŷ′ ‖ ŷ) − γ3 H(ŷ′) + γ4 L_reg
//! ```
//!
//! `L_reg` is either `‖I − W_θ W_θᵀ‖²_F` (once per batch) or the Gaussian
//! KL of the latent posterior to `N(0, I)` (per sample). Per-sample terms are
//! averaged over the batch and the latent samples.
//!
//! Backpropagation, with `q = ŷ′`, `c = log max(ŷ, 1e-12)` and `W` the head
//! weights:
//!
//! ```text
//! ∂/∂logits′ = γ2 q ⊙ (log q − c − KL) + γ3 q ⊙ (log q + H)
//! ∂/∂e′      = Wᵀ ∂/∂logits′ + 2 γ1 (e′ − e)
//! ∂/∂W_θ    += ∂/∂e′ zᵀ,   ∂/∂z = W_θᵀ ∂/∂e′
//! ∂/∂μ       = ∂/∂z,       ∂/∂log σ² = ∂/∂z ⊙ ε ⊙ σ / 2   (zero where clamped)
//! orthogonality: ∂/∂W_θ = −4 (I − W_θ W_θᵀ) W_θ
//! ```

use serde::{Deserialize, Serialize};

use super::model::{orthogonality_residual, CueModel, LOGVAR_CLAMP};
use crate::classifier::LinearSoftmaxHead;
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::{axpy, dot, log_softmax, DenseMatrix, RngState, KL_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `‖I − W_θ W_θᵀ‖²_F` on the decoder.
    #[default]
    #[serde(rename = "orth")]
    Orthogonality,
    /// `KL(N(μ, σ²) ‖ N(0, I))` on the latent posterior.
    #[serde(rename = "klprior")]
    KlPrior,
}

impl Regularizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Regularizer::Orthogonality => "orth",
            Regularizer::KlPrior => "klprior",
        }
    }
}

impl std::str::FromStr for Regularizer {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orth" | "orthogonality" => Ok(Regularizer::Orthogonality),
            "klprior" | "kl_prior" => Ok(Regularizer::KlPrior),
            other => Err(invalid_arg!("unknown regularizer {other:?}, expected orth or klprior")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueTrainConfig {
    /// Weights of reconstruction, prediction KL, entropy and regularizer.
    pub gammas: [f64; 4],
    pub regularizer: Regularizer,
    pub latent_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Latent samples per input per step.
    pub latent_samples: usize,
    /// Initial log-variance of every latent coordinate.
    pub init_logvar: f64,
    /// Use `z = μ` when evaluating the trained model.
    pub deterministic_inference: bool,
    /// Early stopping on deterministic dev loss; `None` disables it.
    pub patience: Option<usize>,
}

impl Default for CueTrainConfig {
    fn default() -> Self {
        Self {
            gammas: [1.0, 1.0, 0.1, 0.1],
            regularizer: Regularizer::Orthogonality,
            latent_dim: 100,
            lr: 2e-5,
            epochs: 50,
            batch_size: 16,
            latent_samples: 1,
            init_logvar: 0.0,
            deterministic_inference: true,
            patience: None,
        }
    }
}

impl CueTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid_arg!("loss weights must be finite and >= 0, got {:?}", self.gammas));
        }
        if self.gammas.iter().all(|g| *g == 0.0) {
            return Err(invalid_arg!("at least one loss weight must be positive"));
        }
        if self.latent_samples == 0 || self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid_arg!(
                "latent samples, latent dim, epochs and batch size must be at least 1"
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !self.init_logvar.is_finite() {
            return Err(invalid_arg!("learning rate and initial log-variance must be finite"));
        }
        if self.patience == Some(0) {
            return Err(invalid_arg!("early-stop patience must be at least 1"));
        }
        Ok(())
    }
}

/// Averaged loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl_pred: f64,
    pub entropy_pred: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, gammas: &[f64; 4]) -> f64 {
        gammas[0] * self.recon + gammas[1] * self.kl_pred - gammas[2] * self.entropy_pred
            + gammas[3] * self.reg
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.recon += weight * other.recon;
        self.kl_pred += weight * other.kl_pred;
        self.entropy_pred += weight * other.entropy_pred;
        self.reg += weight * other.reg;
        self.total += weight * other.total;
    }
}

/// Gradient with the same layout as [`CueModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CueGradient {
    pub mean_w: DenseMatrix,
    pub mean_b: Vec<f64>,
    pub logvar_w: DenseMatrix,
    pub logvar_b: Vec<f64>,
    pub decoder: DenseMatrix,
}

impl CueGradient {
    fn zeros_like(m: &CueModel) -> Self {
        let (dim, d) = m.mean_w.shape();
        Self {
            mean_w: DenseMatrix::zeros(dim, d),
            mean_b: vec![0.0; dim],
            logvar_w: DenseMatrix::zeros(dim, d),
            logvar_b: vec![0.0; dim],
            decoder: DenseMatrix::zeros(d, dim),
        }
    }

    /// Flat vector in the order of [`CueModel::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mean_w.as_slice().to_vec();
        v.extend_from_slice(&self.mean_b);
        v.extend_from_slice(self.logvar_w.as_slice());
        v.extend_from_slice(&self.logvar_b);
        v.extend_from_slice(self.decoder.as_slice());
        v
    }
}

/// Noise of shape `batch × samples × latent_dim`; entry `b * samples + s`
/// is the noise for sample `s` of batch element `b`.
pub fn draw_noise(rng: &mut RngState, batch: usize, samples: usize, latent_dim: usize) -> Vec<Vec<f64>> {
    (0..batch * samples)
        .map(|_| {
            let mut v = vec![0.0; latent_dim];
            rng.fill_normal(&mut v);
            v
        })
        .collect()
}

fn check_inputs(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    noise: &[Vec<f64>],
    config: &CueTrainConfig,
) -> Result<usize> {
    head.ensure_frozen()?;
    config.validate()?;
    if batch.is_empty() {
        return Err(invalid_arg!("empty batch"));
    }
    if head.embed_dim() != model.embed_dim() {
        return Err(invalid_arg!(
            "head over {} dims, CUE model over {}",
            head.embed_dim(),
            model.embed_dim()
        ));
    }
    for e in batch {
        model.check_embedding(e)?;
    }
    if noise.is_empty() || noise.len() % batch.len() != 0 {
        return Err(invalid_arg!(
            "{} noise vectors for a batch of {}",
            noise.len(),
            batch.len()
        ));
    }
    if let Some(v) = noise.iter().find(|v| v.len() != model.latent_dim()) {
        return Err(invalid_arg!(
            "noise vector of length {} for latent dimension {}",
            v.len(),
            model.latent_dim()
        ));
    }
    Ok(noise.len() / batch.len())
}

fn evaluate(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    noise: &[Vec<f64>],
    config: &CueTrainConfig,
    mut grad: Option<&mut CueGradient>,
) -> Result<LossBreakdown> {
    let samples = check_inputs(model, batch, head, noise, config)?;
    let [g1, g2, g3, g4] = config.gammas;
    let kl_mode = config.regularizer == Regularizer::KlPrior;
    let scale = 1.0 / (batch.len() * samples) as f64;
    let mut out = LossBreakdown::default();

    for (b, e) in batch.iter().enumerate() {
        let ref_logp: Vec<f64> = head
            .predict_unchecked(e)
            .iter()
            .map(|p| p.max(KL_FLOOR).ln())
            .collect();
        let mu = model.mean_unchecked(e);
        let raw = model.logvar_raw_unchecked(e);
        let lv: Vec<f64> = raw.iter().map(|a| a.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).collect();
        let sigma: Vec<f64> = lv.iter().map(|l| (0.5 * l).exp()).collect();

        for s in 0..samples {
            let eps = &noise[b * samples + s];
            let z: Vec<f64> = (0..mu.len()).map(|d| mu[d] + eps[d] * sigma[d]).collect();
            let e_rec = model.decoder.matvec_unchecked(&z);
            let diff: Vec<f64> = e_rec.iter().zip(e.iter()).map(|(a, b)| a - b).collect();
            let recon = dot(&diff, &diff);

            let logq = log_softmax(&head.logits_unchecked(&e_rec));
            let q: Vec<f64> = logq.iter().map(|l| l.exp()).collect();
            let kl = q
                .iter()
                .zip(&logq)
                .zip(&ref_logp)
                .map(|((qi, lq), lp)| qi * (lq - lp))
                .sum::<f64>()
                .max(0.0);
            let ent = (-dot(&q, &logq)).max(0.0);
            let prior_kl = if kl_mode {
                0.5 * (0..mu.len())
                    .map(|d| mu[d] * mu[d] + lv[d].exp() - lv[d] - 1.0)
                    .sum::<f64>()
            } else {
                0.0
            };

            out.recon += scale * recon;
            out.kl_pred += scale * kl;
            out.entropy_pred += scale * ent;
            out.reg += scale * prior_kl;

            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            let g_logits: Vec<f64> = (0..q.len())
                .map(|k| {
                    q[k] * (g2 * (logq[k] - ref_logp[k] - kl) + g3 * (logq[k] + ent))
                })
                .collect();
            let mut g_rec = head.weights().transpose_matvec_unchecked(&g_logits);
            axpy(2.0 * g1, &diff, &mut g_rec);
            g.decoder.add_outer(scale, &g_rec, &z);
            let g_z = model.decoder.transpose_matvec_unchecked(&g_rec);
            let mut g_mu = g_z.clone();
            let mut g_lv: Vec<f64> = (0..mu.len())
                .map(|d| {
                    if raw[d].abs() > LOGVAR_CLAMP {
                        0.0
                    } else {
                        g_z[d] * eps[d] * 0.5 * sigma[d]
                    }
                })
                .collect();
            if kl_mode {
                for d in 0..mu.len() {
                    g_mu[d] += g4 * mu[d];
                    if raw[d].abs() <= LOGVAR_CLAMP {
                        g_lv[d] += g4 * 0.5 * (lv[d].exp() - 1.0);
                    }
                }
            }
            g.mean_w.add_outer(scale, &g_mu, e);
            axpy(scale, &g_mu, &mut g.mean_b);
            g.logvar_w.add_outer(scale, &g_lv, e);
            axpy(scale, &g_lv, &mut g.logvar_b);
        }
    }

    if !kl_mode {
        let m = orthogonality_residual(&model.decoder);
        out.reg = m.as_slice().iter().map(|v| v * v).sum();
        if let Some(g) = grad.as_deref_mut() {
            if g4 != 0.0 {
                let mw = m.matmul(&model.decoder)?;
                g.decoder.add_scaled(-4.0 * g4, &mw)?;
            }
        }
    }
    out.total = out.weighted_total(&config.gammas);
    Ok(out)
}

/// Loss of one embedding averaged over freshly drawn latent samples.
pub fn loss(
    model: &CueModel,
    e: &[f64],
    head: &LinearSoftmaxHead,
    rng: &mut RngState,
    config: &CueTrainConfig,
) -> Result<LossBreakdown> {
    let noise = draw_noise(rng, 1, config.latent_samples, model.latent_dim());
    evaluate(model, &[e], head, &noise, config, None)
}

/// Batch loss for fixed noise.
pub fn batch_loss_with_noise(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    noise: &[Vec<f64>],
    config: &CueTrainConfig,
) -> Result<LossBreakdown> {
    evaluate(model, batch, head, noise, config, None)
}

/// Batch loss with `z = μ`.
pub fn deterministic_loss(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    config: &CueTrainConfig,
) -> Result<LossBreakdown> {
    let noise = vec![vec![0.0; model.latent_dim()]; batch.len()];
    evaluate(model, batch, head, &noise, config, None)
}

/// Exact gradient of the batch loss holding `noise` fixed.
pub fn grad_with_noise(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    noise: &[Vec<f64>],
    config: &CueTrainConfig,
) -> Result<(LossBreakdown, CueGradient)> {
    let mut g = CueGradient::zeros_like(model);
    let l = evaluate(model, batch, head, noise, config, Some(&mut g))?;
    Ok((l, g))
}

/// Reparameterized gradient with freshly drawn noise.
pub fn grad(
    model: &CueModel,
    batch: &[&[f64]],
    head: &LinearSoftmaxHead,
    rng: &mut RngState,
    config: &CueTrainConfig,
) -> Result<(LossBreakdown, CueGradient)> {
    let noise = draw_noise(rng, batch.len(), config.latent_samples, model.latent_dim());
    grad_with_noise(model, batch, head, &noise, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{entropy, finite_diff_grad, max_relative_error, LogBase};

    fn random_setup(d: usize, dim: usize, k: usize, seed: u64) -> (CueModel, LinearSoftmaxHead, Vec<Vec<f64>>) {
        let mut rng = RngState::new(seed);
        let mut m = CueModel::zeros(d, dim);
        let flat: Vec<f64> = (0..m.num_params()).map(|_| 0.4 * rng.normal()).collect();
        m.set_flat(&flat).unwrap();
        let hw: Vec<f64> = (0..k * d + k).map(|_| rng.normal()).collect();
        let head = LinearSoftmaxHead::from_flat(k, d, &hw).unwrap().freeze();
        let batch = (0..3).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        (m, head, batch)
    }

    fn identity_rig(d: usize) -> CueModel {
        let mut m = CueModel::zeros(d, d);
        m.mean_w = DenseMatrix::identity(d);
        m.logvar_b = vec![-1e6; d];
        m.decoder = DenseMatrix::identity(d);
        m
    }

    fn check_gradient(reg: Regularizer, gammas: [f64; 4]) {
        let (model, head, batch) = random_setup(4, 3, 3, 21);
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        let config = CueTrainConfig {
            gammas,
            regularizer: reg,
            latent_samples: 2,
            ..CueTrainConfig::default()
        };
        let noise = draw_noise(&mut RngState::new(3), refs.len(), 2, 3);
        let (_, g) = grad_with_noise(&model, &refs, &head, &noise, &config).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                let mut m = model.clone();
                m.set_flat(p).unwrap();
                batch_loss_with_noise(&m, &refs, &head, &noise, &config).unwrap().total
            },
            &model.to_flat(),
            1e-5,
        );
        let err = max_relative_error(&g.to_flat(), &numeric, 1e-6);
        assert!(err <= 1e-4, "{reg:?} {gammas:?}: relative error {err}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        check_gradient(Regularizer::Orthogonality, [1.0, 1.0, 0.1, 0.1]);
        check_gradient(Regularizer::KlPrior, [0.3, 2.0, 0.7, 0.5]);
        check_gradient(Regularizer::Orthogonality, [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn reconstruction_only_gradient_is_least_squares() {
        // With ε = 0 and γ = (1,0,0,0) the loss is mean ‖W_θ(W_μ e + b_μ) − e‖².
        let (model, head, batch) = random_setup(3, 2, 2, 5);
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        let config = CueTrainConfig {
            gammas: [1.0, 0.0, 0.0, 0.0],
            ..CueTrainConfig::default()
        };
        let noise = vec![vec![0.0; 2]; refs.len()];
        let (_, g) = grad_with_noise(&model, &refs, &head, &noise, &config).unwrap();
        let n = refs.len() as f64;
        let mut expected_dec = DenseMatrix::zeros(3, 2);
        let mut expected_mb = vec![0.0; 2];
        for e in &refs {
            let z = model.mean_latent(e).unwrap();
            let mut r = model.decode(&z).unwrap();
            axpy(-1.0, e, &mut r);
            expected_dec.add_outer(2.0 / n, &r, &z);
            axpy(2.0 / n, &model.decoder.transpose_matvec(&r).unwrap(), &mut expected_mb);
        }
        for (a, b) in g.decoder.as_slice().iter().zip(expected_dec.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in g.mean_b.iter().zip(&expected_mb) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_rig_terms() {
        let (_, head, batch) = random_setup(3, 3, 2, 8);
        let model = identity_rig(3);
        let e = batch[0].as_slice();
        let config = CueTrainConfig::default();
        let l = deterministic_loss(&model, &[e], &head, &config).unwrap();
        assert!(l.recon.abs() < 1e-24);
        assert!(l.kl_pred.abs() < 1e-15);
        assert_eq!(l.reg, 0.0);
        let h = entropy(&head.predict(e).unwrap(), LogBase::Natural).unwrap();
        assert!((l.entropy_pred - h).abs() < 1e-12);
        let rc = CueTrainConfig {
            gammas: [1.0, 0.0, 0.0, 0.0],
            ..config
        };
        let noise = vec![vec![0.0; 3]];
        let (_, g) = grad_with_noise(&model, &[e], &head, &noise, &rc).unwrap();
        assert!(g.to_flat().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn breakdown_satisfies_weighted_sum() {
        let (model, head, batch) = random_setup(4, 3, 2, 2);
        let config = CueTrainConfig {
            gammas: [0.7, 1.3, 0.4, 0.2],
            ..CueTrainConfig::default()
        };
        let l = loss(&model, &batch[0], &head, &mut RngState::new(1), &config).unwrap();
        let expected = 0.7 * l.recon + 1.3 * l.kl_pred - 0.4 * l.entropy_pred + 0.2 * l.reg;
        assert!((l.total - expected).abs() <= 1e-9);
        assert!(l.entropy_pred <= 2f64.ln());
    }

    #[test]
    fn unfrozen_head_is_rejected() {
        let (model, head, batch) = random_setup(3, 2, 2, 1);
        let thawed = LinearSoftmaxHead::from_parts(head.weights().clone(), head.bias().to_vec()).unwrap();
        let err = loss(&model, &batch[0], &thawed, &mut RngState::new(0), &CueTrainConfig::default())
            .unwrap_err();
        assert_eq!(err.category(), "contract");
    }

    #[test]
    fn config_validation() {
        let bad = CueTrainConfig {
            gammas: [0.0; 4],
            ..CueTrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = CueTrainConfig {
            latent_samples: 0,
            ..CueTrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("klprior".parse::<Regularizer>().unwrap(), Regularizer::KlPrior);
    }
}
