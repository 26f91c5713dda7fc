//! Independent oracles shared by the acceptance and property suites.

use cue_core::cue::CueModel;
use cue_core::dataset::Token;
use cue_core::metrics::PredictionSet;
use cue_core::numerics::{dot, sub};

/// Brute-force ECE: every bin scans every sample.
pub fn ece_oracle(preds: &PredictionSet, bins: usize, lower: f64) -> f64 {
    let edge = |m: usize| {
        if m + 1 == bins {
            1.0
        } else {
            lower + (1.0 - lower) * (m + 1) as f64 / bins as f64
        }
    };
    let n = preds.len();
    let mut total = 0.0;
    for m in 0..bins {
        let (mut count, mut correct, mut conf) = (0usize, 0usize, 0.0);
        for i in 0..n {
            let c = preds.confidences()[i];
            let above_prev = m == 0 || c > edge(m - 1);
            let below_top = c <= edge(m) || m + 1 == bins;
            if above_prev && below_top {
                count += 1;
                conf += c;
                if preds.predicted()[i] == preds.labels()[i] {
                    correct += 1;
                }
            }
        }
        if count > 0 {
            let acc = correct as f64 / count as f64;
            total += count as f64 / n as f64 * (acc - conf / count as f64).abs();
        }
    }
    total
}

/// Ranking by counting: position of `a` is the number of values above it
/// plus equal values at lower indices.
pub fn rank_by_counting(v: &[f64]) -> Vec<usize> {
    let mut order = vec![0; v.len()];
    for a in 0..v.len() {
        let before = (0..v.len()).filter(|&b| v[b] > v[a] || (v[b] == v[a] && b < a)).count();
        order[before] = a;
    }
    order
}

/// Exhaustive recomputation of a UFI instance.
pub fn ufi_oracle(model: &CueModel, e: &[f64], alpha: usize, tokens: &[Token]) -> (Vec<usize>, Vec<f64>, Vec<usize>) {
    let dim = model.latent_dim();
    let z: Vec<f64> = (0..dim)
        .map(|d| model.mean_bias()[d] + dot(model.mean_weights().row(d), e))
        .collect();
    let w = model.decoder();
    let r: Vec<Vec<f64>> = (0..dim).map(|d| (0..w.rows()).map(|i| z[d] * w.get(i, d)).collect()).collect();
    let e_prime: Vec<f64> = (0..w.rows()).map(|i| (0..dim).map(|d| w.get(i, d) * z[d]).sum()).collect();
    let delta = sub(&e_prime, e);
    let scores: Vec<f64> = r.iter().map(|rd| dot(&delta, rd)).collect();
    let dims = rank_by_counting(&scores);
    let mut r_d = vec![0.0; w.rows()];
    for &d in &dims[..alpha] {
        for i in 0..r_d.len() {
            r_d[i] += r[d][i];
        }
    }
    let token_vals: Vec<f64> = tokens.iter().map(|t| dot(&r_d, &t.vector)).collect();
    (dims, scores, rank_by_counting(&token_vals))
}

