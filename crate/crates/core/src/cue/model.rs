use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::numerics::{DenseMatrix, RngState};

/// Log-variances are clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionMode {
    /// `z = μ + ε ⊙ σ` with fresh noise.
    Sampled,
    /// `z = μ`.
    #[default]
    Deterministic,
}

impl std::str::FromStr for ReconstructionMode {
    type Err = crate::error::CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(ReconstructionMode::Sampled),
            "deterministic" => Ok(ReconstructionMode::Deterministic),
            other => Err(invalid_arg!("unknown reconstruction mode {other:?}, expected deterministic or sampled")),
        }
    }
}

/// Latent code of one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Gaussian encoder with a bias-free linear decoder.
///
/// `μ = W_μ e + b_μ`, `log σ² = clamp(W_s e + b_s)`, `e′ = W_θ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct CueModel {
    pub(crate) mean_w: DenseMatrix,
    pub(crate) mean_b: Vec<f64>,
    pub(crate) logvar_w: DenseMatrix,
    pub(crate) logvar_b: Vec<f64>,
    pub(crate) decoder: DenseMatrix,
}

impl CueModel {
    /// All parameters zero: `μ = 0`, `σ = 1`, `e′ = 0`.
    pub fn zeros(embed_dim: usize, latent_dim: usize) -> Self {
        Self {
            mean_w: DenseMatrix::zeros(latent_dim, embed_dim),
            mean_b: vec![0.0; latent_dim],
            logvar_w: DenseMatrix::zeros(latent_dim, embed_dim),
            logvar_b: vec![0.0; latent_dim],
            decoder: DenseMatrix::zeros(embed_dim, latent_dim),
        }
    }

    /// Training initialization.
    ///
    /// The encoder mean map starts at zero so that the latent code only
    /// grows in directions the decoder actually uses; the decoder is drawn
    /// from `N(0, 1/dim)` and every log-variance starts at `logvar_bias`.
    pub fn init(embed_dim: usize, latent_dim: usize, logvar_bias: f64, rng: &mut RngState) -> Result<Self> {
        if embed_dim == 0 || latent_dim == 0 {
            return Err(invalid_arg!("embedding and latent dimensions must be positive"));
        }
        let scale = 1.0 / (latent_dim as f64).sqrt();
        let mut m = Self::zeros(embed_dim, latent_dim);
        m.logvar_b = vec![logvar_bias.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP); latent_dim];
        m.decoder = DenseMatrix::from_fn(embed_dim, latent_dim, |_, _| scale * rng.normal());
        Ok(m)
    }

    pub fn from_parts(
        mean_w: DenseMatrix,
        mean_b: Vec<f64>,
        logvar_w: DenseMatrix,
        logvar_b: Vec<f64>,
        decoder: DenseMatrix,
    ) -> Result<Self> {
        let (dim, d) = mean_w.shape();
        if dim == 0 || d == 0 {
            return Err(invalid_arg!("empty CUE encoder"));
        }
        if mean_b.len() != dim
            || logvar_w.shape() != (dim, d)
            || logvar_b.len() != dim
            || decoder.shape() != (d, dim)
        {
            return Err(invalid_arg!(
                "inconsistent CUE shapes: mean {:?}, log-variance {:?}, decoder {:?}",
                mean_w.shape(),
                logvar_w.shape(),
                decoder.shape()
            ));
        }
        if mean_b.iter().chain(&logvar_b).any(|v| !v.is_finite()) {
            return Err(invalid_arg!("non-finite CUE bias"));
        }
        Ok(Self {
            mean_w,
            mean_b,
            logvar_w,
            logvar_b,
            decoder,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.mean_w.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_w.rows()
    }

    pub fn decoder(&self) -> &DenseMatrix {
        &self.decoder
    }

    pub fn mean_weights(&self) -> &DenseMatrix {
        &self.mean_w
    }

    pub fn mean_bias(&self) -> &[f64] {
        &self.mean_b
    }

    pub fn logvar_weights(&self) -> &DenseMatrix {
        &self.logvar_w
    }

    pub fn logvar_bias(&self) -> &[f64] {
        &self.logvar_b
    }

    /// Tensors in checkpoint order: `W_μ, b_μ, W_s, b_s, W_θ`.
    pub fn tensors(&self) -> Vec<DenseMatrix> {
        let dim = self.latent_dim();
        vec![
            self.mean_w.clone(),
            DenseMatrix::from_vec(1, dim, self.mean_b.clone()).expect("bias shape"),
            self.logvar_w.clone(),
            DenseMatrix::from_vec(1, dim, self.logvar_b.clone()).expect("bias shape"),
            self.decoder.clone(),
        ]
    }

    pub fn from_tensors(mut t: Vec<DenseMatrix>) -> Result<Self> {
        if t.len() != 5 {
            return Err(invalid_arg!("CUE model needs 5 tensors, got {}", t.len()));
        }
        let decoder = t.pop().expect("len 5");
        let logvar_b = t.pop().expect("len 5").into_vec();
        let logvar_w = t.pop().expect("len 5");
        let mean_b = t.pop().expect("len 5").into_vec();
        let mean_w = t.pop().expect("len 5");
        Self::from_parts(mean_w, mean_b, logvar_w, logvar_b, decoder)
    }

    pub fn num_params(&self) -> usize {
        2 * self.mean_w.as_slice().len() + 2 * self.latent_dim() + self.decoder.as_slice().len()
    }

    /// Flat parameters in the order of [`tensors`](Self::tensors).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.mean_w.as_slice());
        v.extend_from_slice(&self.mean_b);
        v.extend_from_slice(self.logvar_w.as_slice());
        v.extend_from_slice(&self.logvar_b);
        v.extend_from_slice(self.decoder.as_slice());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid_arg!(
                "flat CUE parameters of length {}, expected {}",
                flat.len(),
                self.num_params()
            ));
        }
        let mut off = 0;
        for part in [
            self.mean_w.as_mut_slice(),
            &mut self.mean_b,
            self.logvar_w.as_mut_slice(),
            &mut self.logvar_b,
            self.decoder.as_mut_slice(),
        ] {
            let n = part.len();
            part.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub(crate) fn check_embedding(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.embed_dim() {
            return Err(invalid_arg!(
                "embedding of length {} passed to a CUE model over {} dimensions",
                e.len(),
                self.embed_dim()
            ));
        }
        Ok(())
    }

    pub(crate) fn mean_unchecked(&self, e: &[f64]) -> Vec<f64> {
        let mut mu = self.mean_w.matvec_unchecked(e);
        for (m, b) in mu.iter_mut().zip(&self.mean_b) {
            *m += b;
        }
        mu
    }

    /// Pre-clamp log-variance activations.
    pub(crate) fn logvar_raw_unchecked(&self, e: &[f64]) -> Vec<f64> {
        let mut a = self.logvar_w.matvec_unchecked(e);
        for (v, b) in a.iter_mut().zip(&self.logvar_b) {
            *v += b;
        }
        a
    }

    pub fn mean_latent(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_embedding(e)?;
        Ok(self.mean_unchecked(e))
    }

    pub fn sigma(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.check_embedding(e)?;
        Ok(self
            .logvar_raw_unchecked(e)
            .iter()
            .map(|a| (0.5 * a.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp())
            .collect())
    }

    /// `z = μ + ε ⊙ σ` for a caller-supplied `ε`.
    pub fn encode_with_noise(&self, e: &[f64], eps: &[f64]) -> Result<Encoding> {
        if eps.len() != self.latent_dim() {
            return Err(invalid_arg!(
                "noise of length {} for latent dimension {}",
                eps.len(),
                self.latent_dim()
            ));
        }
        let mu = self.mean_latent(e)?;
        let sigma = self.sigma(e)?;
        let z = mu
            .iter()
            .zip(&sigma)
            .zip(eps)
            .map(|((m, s), ep)| m + ep * s)
            .collect();
        Ok(Encoding { z, mu, sigma })
    }

    pub fn encode(&self, e: &[f64], rng: &mut RngState) -> Result<Encoding> {
        self.check_embedding(e)?;
        let mut eps = vec![0.0; self.latent_dim()];
        rng.fill_normal(&mut eps);
        self.encode_with_noise(e, &eps)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.matvec(z)
    }

    pub fn reconstruct(&self, e: &[f64], mode: ReconstructionMode, rng: &mut RngState) -> Result<Vec<f64>> {
        let z = match mode {
            ReconstructionMode::Deterministic => self.mean_latent(e)?,
            ReconstructionMode::Sampled => self.encode(e, rng)?.z,
        };
        self.decode(&z)
    }

    /// `e′ = W_θ μ(e)`.
    pub fn reconstruct_mean(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.mean_latent(e)?)
    }

    /// `‖I − W_θ W_θᵀ‖²_F`.
    pub fn orthogonality_penalty(&self) -> f64 {
        let m = orthogonality_residual(&self.decoder);
        m.as_slice().iter().map(|v| v * v).sum()
    }

    /// `‖I − W_θ W_θᵀ‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        self.orthogonality_penalty().sqrt()
    }
}

/// `I − W Wᵀ` for a `D×dim` matrix `W`.
pub(crate) fn orthogonality_residual(w: &DenseMatrix) -> DenseMatrix {
    let d = w.rows();
    DenseMatrix::from_fn(d, d, |i, j| {
        let g = crate::numerics::dot(w.row(i), w.row(j));
        if i == j {
            1.0 - g
        } else {
            -g
        }
    })
}
