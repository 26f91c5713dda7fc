//! Latent-dimension and token influence scores.
//!
//! With `z = μ(e)`, `e′ = W_θ z` and `Δe = e′ − e`, latent dimension `d`
//! contributes `r_d = z_d · W_θ[:, d]` to the reconstruction and scores
//! `⟨Δe, r_d⟩`. Because the decoder is linear, `Σ_d r_d = e′` and the scores
//! sum to `⟨Δe, e′⟩`. The top-α contributions form `r_D`, and token `j`
//! scores `⟨r_D, e_j⟩`.

use serde::{Deserialize, Serialize};

use crate::classifier::LinearSoftmaxHead;
use crate::cue::CueModel;
use crate::dataset::{EmbeddingDataset, Token};
use crate::error::{invalid_arg, CueError, Result};
use crate::numerics::{argmax, axpy, dot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimScore {
    pub dim: usize,
    pub score: f64,
    /// 0 for the highest score.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub index: usize,
    pub token: String,
    pub score: f64,
    pub rank: usize,
}

/// Indices ordered by descending value; ties keep ascending index order.
/// `-0.0` and `0.0` count as a tie.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        if values[a] == values[b] {
            std::cmp::Ordering::Equal
        } else {
            values[b].total_cmp(&values[a])
        }
    });
    order
}

/// Per-sample latent decomposition of a deterministic reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentAttribution {
    pub z: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub delta: Vec<f64>,
    /// Score of every dimension, indexed by dimension.
    pub raw_scores: Vec<f64>,
    /// Dimensions in rank order.
    pub ranked: Vec<DimScore>,
}

impl LatentAttribution {
    /// `r_d = z_d · W_θ[:, d]`.
    pub fn contribution(&self, model: &CueModel, d: usize) -> Vec<f64> {
        let w = model.decoder();
        (0..w.rows()).map(|i| self.z[d] * w.get(i, d)).collect()
    }
}

pub fn dim_scores(model: &CueModel, e: &[f64]) -> Result<LatentAttribution> {
    let z = model.mean_latent(e)?;
    let reconstruction = model.decode(&z)?;
    let delta: Vec<f64> = reconstruction.iter().zip(e).map(|(a, b)| a - b).collect();
    let w = model.decoder();
    let raw_scores: Vec<f64> = (0..z.len())
        .map(|d| (0..w.rows()).map(|i| delta[i] * (z[d] * w.get(i, d))).sum())
        .collect();
    let ranked = rank_descending(&raw_scores)
        .into_iter()
        .enumerate()
        .map(|(rank, dim)| DimScore {
            dim,
            score: raw_scores[dim],
            rank,
        })
        .collect();
    Ok(LatentAttribution {
        z,
        reconstruction,
        delta,
        raw_scores,
        ranked,
    })
}

/// `r_D`, the sum of the top-`alpha` dimension contributions.
pub fn influential_rep(model: &CueModel, attribution: &LatentAttribution, alpha: usize) -> Result<Vec<f64>> {
    let dim = model.latent_dim();
    if alpha == 0 || alpha > dim {
        return Err(invalid_arg!("alpha must lie in 1..={dim}, got {alpha}"));
    }
    if attribution.z.len() != dim {
        return Err(invalid_arg!("attribution does not belong to this model"));
    }
    let mut r = vec![0.0; model.embed_dim()];
    for s in &attribution.ranked[..alpha] {
        axpy(1.0, &attribution.contribution(model, s.dim), &mut r);
    }
    Ok(r)
}

pub fn token_scores(r_d: &[f64], tokens: Option<&[Token]>) -> Result<Vec<TokenScore>> {
    let tokens = tokens.ok_or_else(|| {
        CueError::Unsupported(
            "token scoring needs a token table; this dataset has none".into(),
        )
    })?;
    if tokens.is_empty() {
        return Err(invalid_arg!("sample has an empty token table"));
    }
    if let Some(t) = tokens.iter().find(|t| t.vector.len() != r_d.len()) {
        return Err(invalid_arg!(
            "token vector of length {} against representation of length {}",
            t.vector.len(),
            r_d.len()
        ));
    }
    let scores: Vec<f64> = tokens.iter().map(|t| dot(r_d, &t.vector)).collect();
    Ok(rank_descending(&scores)
        .into_iter()
        .enumerate()
        .map(|(rank, index)| TokenScore {
            index,
            token: tokens[index].text.clone(),
            score: scores[index],
            rank,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfiReport {
    pub sample_id: usize,
    pub label: usize,
    pub alpha: usize,
    pub predicted_before: usize,
    pub prob_before: f64,
    pub predicted_after: usize,
    pub prob_after: f64,
    pub dims: Vec<DimScore>,
    pub tokens: Vec<TokenScore>,
}

/// Full attribution for one dataset sample.
pub fn ufi(
    model: &CueModel,
    head: &LinearSoftmaxHead,
    dataset: &EmbeddingDataset,
    sample: usize,
    alpha: usize,
) -> Result<UfiReport> {
    if sample >= dataset.len() {
        return Err(invalid_arg!("sample {sample} out of range for {} samples", dataset.len()));
    }
    let tokens = dataset.tokens(sample);
    if tokens.is_none() {
        return Err(CueError::Unsupported(
            "token scoring needs a token table; this dataset has none".into(),
        ));
    }
    let e = dataset.embedding(sample);
    let attribution = dim_scores(model, e)?;
    let r = influential_rep(model, &attribution, alpha)?;
    let tokens = token_scores(&r, tokens)?;
    let before = head.predict(e)?;
    let after = head.predict(&attribution.reconstruction)?;
    let (pb, pa) = (argmax(&before), argmax(&after));
    Ok(UfiReport {
        sample_id: sample,
        label: dataset.label(sample),
        alpha,
        predicted_before: pb,
        prob_before: before[pb],
        predicted_after: pa,
        prob_after: after[pa],
        dims: attribution.ranked,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{DenseMatrix, RngState};

    fn identity_model(d: usize) -> CueModel {
        CueModel::from_parts(
            DenseMatrix::identity(d),
            vec![0.0; d],
            DenseMatrix::zeros(d, d),
            vec![0.0; d],
            DenseMatrix::identity(d),
        )
        .unwrap()
    }

    fn random_model(d: usize, dim: usize, seed: u64) -> CueModel {
        let mut rng = RngState::new(seed);
        let mut m = CueModel::zeros(d, dim);
        let flat: Vec<f64> = (0..m.num_params()).map(|_| rng.normal()).collect();
        m.set_flat(&flat).unwrap();
        m
    }

    #[test]
    fn hand_example() {
        // z = (1, 1) through an identity encoder with bias; Δe = (1, 0).
        let m = CueModel::from_parts(
            DenseMatrix::identity(2),
            vec![1.0, 0.0],
            DenseMatrix::zeros(2, 2),
            vec![0.0; 2],
            DenseMatrix::identity(2),
        )
        .unwrap();
        let a = dim_scores(&m, &[0.0, 1.0]).unwrap();
        assert_eq!(a.z, vec![1.0, 1.0]);
        assert_eq!(a.delta, vec![1.0, 0.0]);
        assert_eq!(a.raw_scores, vec![1.0, 0.0]);
        assert_eq!(a.ranked[0].dim, 0);
        assert_eq!(a.ranked[1].rank, 1);
    }

    #[test]
    fn zero_delta_gives_zero_scores_in_index_order() {
        let a = dim_scores(&identity_model(3), &[1.0, -2.0, 0.5]).unwrap();
        assert!(a.raw_scores.iter().all(|s| *s == 0.0));
        assert_eq!(a.ranked.iter().map(|s| s.dim).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn scores_sum_to_delta_dot_reconstruction() {
        let m = random_model(5, 4, 3);
        let e = [0.3, -1.0, 0.2, 0.7, 1.1];
        let a = dim_scores(&m, &e).unwrap();
        let total: f64 = a.raw_scores.iter().sum();
        assert!((total - dot(&a.delta, &a.reconstruction)).abs() < 1e-9);
    }

    #[test]
    fn influential_rep_cases() {
        let m = random_model(4, 3, 9);
        let e = [0.5, 0.1, -0.3, 0.9];
        let a = dim_scores(&m, &e).unwrap();
        let full = influential_rep(&m, &a, 3).unwrap();
        assert!(full.iter().zip(&a.reconstruction).all(|(x, y)| (x - y).abs() < 1e-12));
        let one = influential_rep(&m, &a, 1).unwrap();
        assert_eq!(one, a.contribution(&m, a.ranked[0].dim));
        let two = influential_rep(&m, &a, 2).unwrap();
        let second = a.contribution(&m, a.ranked[1].dim);
        for i in 0..4 {
            assert!((two[i] - (one[i] + second[i])).abs() < 1e-12);
        }
        assert!(influential_rep(&m, &a, 0).is_err());
        assert!(influential_rep(&m, &a, 4).is_err());
    }

    #[test]
    fn token_score_cases() {
        let r = [1.0, 2.0, 0.0];
        let toks = vec![
            Token {
                text: "orth".into(),
                vector: vec![2.0, -1.0, 5.0],
            },
            Token {
                text: "aligned".into(),
                vector: vec![3.0, 6.0, 0.0],
            },
            Token {
                text: "neg".into(),
                vector: vec![-1.0, 0.0, 0.0],
            },
        ];
        let s = token_scores(&r, Some(&toks)).unwrap();
        assert_eq!(s[0].token, "aligned");
        let orth = s.iter().find(|t| t.token == "orth").unwrap();
        assert_eq!(orth.score, 0.0);
        assert_eq!(orth.rank, 1);
        let err = token_scores(&r, None).unwrap_err();
        assert_eq!(err.category(), "unsupported");
    }
}
