use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Floor applied to the reference distribution inside [`kl_div`].
pub const KL_FLOOR: f64 = 1e-12;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Logarithm base for entropy reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    #[serde(rename = "e")]
    Natural,
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    /// Converts a value in nats to this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Natural => nats,
            LogBase::Two => nats / std::f64::consts::LN_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Natural => "e",
            LogBase::Two => "2",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = crate::error::CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "natural" => Ok(LogBase::Natural),
            "2" => Ok(LogBase::Two),
            other => Err(invalid_arg!("unknown log base {other:?}, expected e or 2")),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(invalid_arg!("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg!("softmax of non-finite logits"));
    }
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    Ok(p)
}

/// Unchecked softmax for hot loops whose inputs are finite by construction.
pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// `log softmax(x)`, computed without forming the probabilities.
pub(crate) fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(invalid_arg!("{what} is empty"));
    }
    if let Some(i) = p.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid_arg!("{what} has invalid entry {} at index {i}", p[i]));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid_arg!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

pub fn entropy(p: &[f64], base: LogBase) -> Result<f64> {
    check_distribution(p, "probability vector")?;
    Ok(base.from_nats(entropy_nats(p)))
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub(crate) fn entropy_nats(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    h.max(0.0)
}

/// `KL(p ‖ q)` in nats, with `q` floored at [`KL_FLOOR`].
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid_arg!(
            "kl_div length mismatch: {} vs {}",
            p.len(),
            q.len()
        ));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(kl_nats(p, q))
}

pub(crate) fn kl_nats(p: &[f64], q: &[f64]) -> f64 {
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(KL_FLOOR).ln()))
        .sum();
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 1000.0, 1000.0]).unwrap();
        assert!(p.iter().all(|&v| close(v, 1.0 / 3.0, 1e-15)));
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!(close(p[0], 2.0 / 3.0, 1e-15) && close(p[1], 1.0 / 3.0, 1e-15));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let h = entropy(&[0.5, 0.5], LogBase::Natural).unwrap();
        assert!(close(h, std::f64::consts::LN_2, 1e-15));
        assert_eq!(entropy(&[1.0, 0.0, 0.0], LogBase::Natural).unwrap(), 0.0);
        let h = entropy(&[0.9, 0.1], LogBase::Natural).unwrap();
        assert!(close(h, -0.9 * 0.9f64.ln() - 0.1 * 0.1f64.ln(), 1e-15));
        assert!(close(h, 0.325083, 1e-6));
        assert!(close(entropy(&[0.5, 0.5], LogBase::Two).unwrap(), 1.0, 1e-15));
        assert!(entropy(&[-0.1, 1.1], LogBase::Natural).is_err());
        assert!(entropy(&[0.3, 0.3], LogBase::Natural).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_div(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(close(v, std::f64::consts::LN_2, 1e-15));
        let v = kl_div(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!(close(v, 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln(), 1e-15));
        assert!(close(v, 0.510826, 1e-6));
        assert!(kl_div(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_floor_keeps_underflowed_reference_finite() {
        let v = kl_div(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite() && v > 10.0);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let x = [3.0, -1.0, 0.5];
        let p = softmax(&x).unwrap();
        for (l, q) in log_softmax(&x).iter().zip(&p) {
            assert!(close(*l, q.ln(), 1e-14));
        }
    }

    #[test]
    fn log_base_parses() {
        assert_eq!("e".parse::<LogBase>().unwrap(), LogBase::Natural);
        assert_eq!("2".parse::<LogBase>().unwrap(), LogBase::Two);
        assert!("10".parse::<LogBase>().is_err());
    }
}
