//! Synthetic Gaussian-mixture datasets with known ground truth.
//!
//! Class `c` has mean `μ_c = (s/√2)·u_c + o·1/√D`, where `u_c` is the `c`-th
//! coordinate axis, so every pair of means sits at distance `s` and the
//! offset `o` moves all of them along the diagonal. Clean samples are drawn
//! from `N(μ_c, σ² I)`.
//!
//! A configurable fraction of each class is *ambiguous*: the sample centre is
//! pulled from `μ_c` toward a random competitor `μ_b`, and its label is
//! flipped to `b` with a configured probability. Such samples carry one planted
//! cue token, the sample embedding shifted along the competitor's axis, which
//! is the token an attribution method should single out.

use serde::{Deserialize, Serialize};

use super::types::{EmbeddingDataset, Token};
use crate::error::{invalid_arg, Result};
use crate::numerics::{DenseMatrix, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub embed_dim: usize,
    pub samples_per_class: usize,
    /// Euclidean distance between any two class means.
    pub separation: f64,
    pub noise_sigma: f64,
    /// Inclusive range of tokens per sample.
    pub tokens_per_sample: (usize, usize),
    pub ambiguous_fraction: f64,
    /// Where an ambiguous centre sits on the segment from its class mean
    /// (0) to the competitor mean (1).
    pub ambiguous_position: f64,
    /// Probability that an ambiguous sample is labelled as the competitor.
    pub ambiguous_label_flip: f64,
    /// Shift of every class mean along the unit diagonal.
    pub common_offset: f64,
    pub token_jitter: f64,
    /// Length of the shift that turns a sample embedding into its cue token.
    pub cue_strength: f64,
    pub with_tokens: bool,
    /// Seed for the generator when built through [`SyntheticConfig::rng`].
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            embed_dim: 16,
            samples_per_class: 500,
            separation: 2.0 * std::f64::consts::SQRT_2,
            noise_sigma: 1.0,
            tokens_per_sample: (6, 10),
            ambiguous_fraction: 0.3,
            ambiguous_position: 0.5,
            ambiguous_label_flip: 0.5,
            common_offset: 0.0,
            token_jitter: 0.3,
            cue_strength: 4.0,
            with_tokens: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.num_classes < 2 {
            return Err(invalid_arg!("need at least 2 classes"));
        }
        if self.embed_dim < 2 {
            return Err(invalid_arg!("embedding dimension must be at least 2"));
        }
        if self.num_classes > self.embed_dim {
            return Err(invalid_arg!(
                "{} classes need at least that many embedding dimensions, got {}",
                self.num_classes,
                self.embed_dim
            ));
        }
        if self.samples_per_class == 0 {
            return Err(invalid_arg!("samples per class must be positive"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid_arg!("noise sigma must be positive"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(invalid_arg!("separation must be finite and >= 0"));
        }
        if !unit(self.ambiguous_fraction) {
            return Err(invalid_arg!("ambiguous fraction must lie in [0, 1]"));
        }
        if !unit(self.ambiguous_position) || !unit(self.ambiguous_label_flip) {
            return Err(invalid_arg!(
                "ambiguous position and label flip must lie in [0, 1]"
            ));
        }
        let (lo, hi) = self.tokens_per_sample;
        if self.with_tokens && (lo == 0 || lo > hi) {
            return Err(invalid_arg!("token range must satisfy 1 <= min <= max"));
        }
        if !(self.token_jitter >= 0.0) || !self.common_offset.is_finite() || !self.cue_strength.is_finite() {
            return Err(invalid_arg!("token jitter, offset and cue strength must be finite"));
        }
        Ok(())
    }

    pub fn rng(&self) -> RngState {
        RngState::new(self.seed)
    }

    /// The `K×D` matrix of class means.
    pub fn class_means(&self) -> DenseMatrix {
        let axis = self.separation / std::f64::consts::SQRT_2;
        let diag = self.common_offset / (self.embed_dim as f64).sqrt();
        DenseMatrix::from_fn(self.num_classes, self.embed_dim, |c, j| {
            diag + if c == j { axis } else { 0.0 }
        })
    }
}

/// Per-sample generation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub generating_class: usize,
    pub competitor: Option<usize>,
    pub cue_token: Option<usize>,
}

impl SampleTruth {
    pub fn is_ambiguous(&self) -> bool {
        self.competitor.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: EmbeddingDataset,
    pub truth: Vec<SampleTruth>,
    pub means: DenseMatrix,
}

pub const CUE_TOKEN_TEXT: &str = "<cue>";

pub fn synth_gaussian_mixture(config: &SyntheticConfig, rng: &mut RngState) -> Result<EmbeddingDataset> {
    Ok(synth_with_truth(config, rng)?.dataset)
}

/// Generates a mixture together with its per-sample generation record.
///
/// Samples are grouped by generating class; within a class the first
/// `round(fraction · n)` samples are the ambiguous ones.
pub fn synth_with_truth(config: &SyntheticConfig, rng: &mut RngState) -> Result<SyntheticData> {
    config.validate()?;
    let k = config.num_classes;
    let d = config.embed_dim;
    let means = config.class_means();
    let n_amb = (config.ambiguous_fraction * config.samples_per_class as f64).round() as usize;

    let total = k * config.samples_per_class;
    let mut rows = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let mut tokens = Vec::with_capacity(total);
    let mut noise = vec![0.0; d];

    for c in 0..k {
        for i in 0..config.samples_per_class {
            let competitor = (i < n_amb).then(|| {
                let b = rng.below(k - 1);
                if b >= c {
                    b + 1
                } else {
                    b
                }
            });
            rng.fill_normal(&mut noise);
            let e: Vec<f64> = (0..d)
                .map(|j| {
                    let centre = match competitor {
                        Some(b) => {
                            means.get(c, j)
                                + config.ambiguous_position * (means.get(b, j) - means.get(c, j))
                        }
                        None => means.get(c, j),
                    };
                    centre + config.noise_sigma * noise[j]
                })
                .collect();
            let label = match competitor {
                Some(b) if rng.bernoulli(config.ambiguous_label_flip) => b,
                _ => c,
            };

            let mut cue_token = None;
            if config.with_tokens {
                let (lo, hi) = config.tokens_per_sample;
                let count = lo + rng.below(hi - lo + 1);
                let mut toks = Vec::with_capacity(count);
                for t in 0..count {
                    rng.fill_normal(&mut noise);
                    let vector = e
                        .iter()
                        .zip(&noise)
                        .map(|(v, z)| v + config.token_jitter * z)
                        .collect();
                    toks.push(Token {
                        text: format!("w{t}"),
                        vector,
                    });
                }
                if let Some(b) = competitor {
                    let j = rng.below(count);
                    let mut vector = e.clone();
                    vector[b] += config.cue_strength;
                    toks[j] = Token {
                        text: CUE_TOKEN_TEXT.into(),
                        vector,
                    };
                    cue_token = Some(j);
                }
                tokens.push(toks);
            }

            rows.extend_from_slice(&e);
            labels.push(label);
            truth.push(SampleTruth {
                generating_class: c,
                competitor,
                cue_token,
            });
        }
    }

    let embeddings = DenseMatrix::from_vec(total, d, rows)?;
    let dataset = EmbeddingDataset::new(
        embeddings,
        labels,
        k,
        None,
        config.with_tokens.then_some(tokens),
    )?;
    Ok(SyntheticData {
        dataset,
        truth,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{argmax, norm_sq, sub};

    fn cfg() -> SyntheticConfig {
        SyntheticConfig {
            num_classes: 3,
            embed_dim: 5,
            samples_per_class: 40,
            seed: 11,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = synth_with_truth(&cfg(), &mut RngState::new(5)).unwrap();
        let b = synth_with_truth(&cfg(), &mut RngState::new(5)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn pairwise_mean_distance_is_separation() {
        let c = SyntheticConfig {
            common_offset: 3.0,
            ..cfg()
        };
        let m = c.class_means();
        let d = norm_sq(&sub(m.row(0), m.row(2))).sqrt();
        assert!((d - c.separation).abs() < 1e-12);
    }

    #[test]
    fn ambiguous_samples_carry_a_cue_token() {
        let data = synth_with_truth(&cfg(), &mut RngState::new(1)).unwrap();
        let n_amb = data.truth.iter().filter(|t| t.is_ambiguous()).count();
        assert_eq!(n_amb, 3 * 12);
        for (i, t) in data.truth.iter().enumerate() {
            let toks = data.dataset.tokens(i).unwrap();
            assert!((6..=10).contains(&toks.len()));
            match (t.competitor, t.cue_token) {
                (Some(b), Some(j)) => {
                    assert_ne!(b, t.generating_class);
                    assert_eq!(toks[j].text, CUE_TOKEN_TEXT);
                    let shift = sub(&toks[j].vector, data.dataset.embedding(i));
                    assert_eq!(argmax(&shift), b);
                }
                (None, None) => assert!(toks.iter().all(|t| t.text != CUE_TOKEN_TEXT)),
                other => panic!("inconsistent truth {other:?}"),
            }
        }
    }

    #[test]
    fn tokenless_generation() {
        let c = SyntheticConfig {
            with_tokens: false,
            ..cfg()
        };
        let data = synth_with_truth(&c, &mut RngState::new(1)).unwrap();
        assert!(!data.dataset.has_tokens());
        assert!(data.truth.iter().all(|t| t.cue_token.is_none()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SyntheticConfig { num_classes: 1, ..cfg() },
            SyntheticConfig { embed_dim: 1, ..cfg() },
            SyntheticConfig { noise_sigma: 0.0, ..cfg() },
            SyntheticConfig { ambiguous_fraction: 1.5, ..cfg() },
            SyntheticConfig { tokens_per_sample: (3, 2), ..cfg() },
        ];
        for c in bad {
            assert_eq!(c.validate().unwrap_err().category(), "invalid-argument");
        }
    }
}
