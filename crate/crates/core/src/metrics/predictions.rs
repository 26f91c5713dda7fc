use crate::error::{invalid_arg, Result};
use crate::numerics::argmax;

/// Probability vectors with their true labels.
///
/// Predicted labels are the argmax (lowest index on ties) and confidences
/// are the maximum entry; both are derived once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    predicted: Vec<usize>,
    confidences: Vec<f64>,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(invalid_arg!(
                "{} probability vectors for {} labels",
                probs.len(),
                labels.len()
            ));
        }
        let num_classes = probs.first().map_or(0, Vec::len);
        for (i, p) in probs.iter().enumerate() {
            if p.len() != num_classes || num_classes == 0 {
                return Err(invalid_arg!("sample {i}: probability vector has length {}", p.len()));
            }
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid_arg!("sample {i}: invalid probability entry"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(invalid_arg!("sample {i}: probabilities sum to {total}"));
            }
            if labels[i] >= num_classes {
                return Err(invalid_arg!("sample {i}: label {} out of range", labels[i]));
            }
        }
        let predicted = probs.iter().map(|p| argmax(p)).collect();
        let confidences = probs
            .iter()
            .map(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self {
            probs,
            labels,
            predicted,
            confidences,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn mean_confidence(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.confidences.iter().sum::<f64>() / self.len() as f64
    }

    /// Fraction of samples whose argmax agrees with `other`'s.
    pub fn argmax_agreement(&self, other: &PredictionSet) -> Result<f64> {
        if other.len() != self.len() || self.is_empty() {
            return Err(invalid_arg!(
                "cannot compare prediction sets of sizes {} and {}",
                self.len(),
                other.len()
            ));
        }
        let same = self
            .predicted
            .iter()
            .zip(&other.predicted)
            .filter(|(a, b)| a == b)
            .count();
        Ok(same as f64 / self.len() as f64)
    }
}
