use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Empirical bias-variance split of a squared prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: usize,
    /// `mean((y − ŷ)²)`.
    pub lhs: f64,
    /// `mean((y − E[y])²)`.
    pub aleatoric: f64,
    /// `mean((E[y] − ŷ)²)`.
    pub epistemic: f64,
    /// `lhs − (aleatoric + epistemic)`, the empirical cross term.
    pub residual: f64,
    /// Standard error of `residual` as a sample mean of
    /// `2 (y − E[y]) (E[y] − ŷ)`.
    pub residual_se: f64,
}

/// Splits `mean((y − ŷ)²)` into noise and model terms given the true
/// conditional mean of every draw.
pub fn decomposition_check(y: &[f64], y_hat: &[f64], expected: &[f64]) -> Result<Decomposition> {
    let n = y.len();
    if n == 0 {
        return Err(invalid_arg!("decomposition needs at least one draw"));
    }
    if y_hat.len() != n || expected.len() != n {
        return Err(invalid_arg!(
            "length mismatch: {n} outcomes, {} predictions, {} means",
            y_hat.len(),
            expected.len()
        ));
    }
    let nf = n as f64;
    let mut lhs = 0.0;
    let mut alea = 0.0;
    let mut epi = 0.0;
    let mut cross = Vec::with_capacity(n);
    for i in 0..n {
        let (yi, pi, mi) = (y[i], y_hat[i], expected[i]);
        lhs += (yi - pi).powi(2);
        alea += (yi - mi).powi(2);
        epi += (mi - pi).powi(2);
        cross.push(2.0 * (yi - mi) * (mi - pi));
    }
    let (lhs, aleatoric, epistemic) = (lhs / nf, alea / nf, epi / nf);
    let residual = lhs - (aleatoric + epistemic);
    let residual_se = if n > 1 {
        let mean = cross.iter().sum::<f64>() / nf;
        let var = cross.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    Ok(Decomposition {
        n,
        lhs,
        aleatoric,
        epistemic,
        residual,
        residual_se,
    })
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid_arg!(
            "correlation needs two equal-length series of at least 2 points"
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(invalid_arg!("correlation of a constant series is undefined"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_prediction_at_mean_has_no_epistemic_term() {
        let y = [0.3, 0.9, 0.5, 0.1];
        let m = [0.5; 4];
        let d = decomposition_check(&y, &m, &m).unwrap();
        assert_eq!(d.epistemic, 0.0);
        assert_eq!(d.lhs, d.aleatoric);
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(decomposition_check(&[], &[], &[]).is_err());
        assert!(decomposition_check(&[1.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_of_monotone_maps() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &z).unwrap() + 1.0).abs() < 1e-15);
        assert!(spearman(&x, &[1.0; 5]).is_err());
    }
}
