use serde::{Deserialize, Serialize};

use super::predictions::PredictionSet;
use crate::error::{invalid_arg, Result};
use crate::numerics::{entropy_nats, LogBase};

/// Confidence interval covered by the ECE bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRange {
    /// `[0, 1]`.
    #[default]
    Unit,
    /// `[1/K, 1]`, the range a max-probability can actually take.
    AboveChance,
}

impl BinRange {
    fn lower(self, num_classes: usize) -> f64 {
        match self {
            BinRange::Unit => 0.0,
            BinRange::AboveChance => 1.0 / num_classes as f64,
        }
    }
}

impl std::str::FromStr for BinRange {
    type Err = crate::error::CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(BinRange::Unit),
            "above_chance" | "above-chance" => Ok(BinRange::AboveChance),
            other => Err(invalid_arg!("unknown bin range {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction correct in the bin; 0 when empty.
    pub accuracy: f64,
    /// Mean confidence in the bin; 0 when empty.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceResult {
    pub ece: f64,
    pub bins: Vec<BinStat>,
}

/// Upper edge of bin `m` (0-based) out of `bins` over `[lower, 1]`.
fn upper_edge(lower: f64, m: usize, bins: usize) -> f64 {
    if m + 1 == bins {
        1.0
    } else {
        lower + (1.0 - lower) * (m + 1) as f64 / bins as f64
    }
}

/// `Σ_m |B_m|/N · |acc(B_m) − conf(B_m)|` over bin statistics.
pub fn ece_from_bins(bins: &[BinStat]) -> f64 {
    let n: usize = bins.iter().map(|b| b.count).sum();
    if n == 0 {
        return 0.0;
    }
    bins.iter()
        .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
        .sum()
}

/// Expected calibration error over `num_bins` equal-width, right-inclusive
/// bins. A confidence equal to the lower end of the range falls in bin 0.
pub fn ece(preds: &PredictionSet, num_bins: usize, range: BinRange) -> Result<EceResult> {
    if preds.is_empty() {
        return Err(invalid_arg!("ECE of an empty prediction set"));
    }
    if num_bins == 0 {
        return Err(invalid_arg!("ECE needs at least one bin"));
    }
    let lower = range.lower(preds.num_classes());
    let mut count = vec![0usize; num_bins];
    let mut correct = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    for i in 0..preds.len() {
        let c = preds.confidences()[i];
        let m = (0..num_bins)
            .find(|&m| c <= upper_edge(lower, m, num_bins))
            .unwrap_or(num_bins - 1);
        count[m] += 1;
        conf_sum[m] += c;
        if preds.predicted()[i] == preds.labels()[i] {
            correct[m] += 1;
        }
    }
    let bins: Vec<BinStat> = (0..num_bins)
        .map(|m| {
            let n = count[m];
            let (accuracy, confidence) = if n == 0 {
                (0.0, 0.0)
            } else {
                (correct[m] as f64 / n as f64, conf_sum[m] / n as f64)
            };
            BinStat {
                lower: if m == 0 {
                    lower
                } else {
                    upper_edge(lower, m - 1, num_bins)
                },
                upper: upper_edge(lower, m, num_bins),
                count: n,
                accuracy,
                confidence,
            }
        })
        .collect();
    Ok(EceResult {
        ece: ece_from_bins(&bins),
        bins,
    })
}

pub fn accuracy(preds: &PredictionSet) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds
        .predicted()
        .iter()
        .zip(preds.labels())
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / preds.len() as f64
}

/// Unweighted mean of per-class F1. A class that is never predicted and
/// never true contributes 0.
pub fn macro_f1(preds: &PredictionSet) -> f64 {
    let k = preds.num_classes();
    if k == 0 {
        return 0.0;
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&p, &y) in preds.predicted().iter().zip(preds.labels()) {
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let total: f64 = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    total / k as f64
}

pub fn avg_entropy(preds: &PredictionSet, base: LogBase) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let total: f64 = preds.probs().iter().map(|p| entropy_nats(p)).sum();
    base.from_nats(total / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub ece_bins: usize,
    pub bin_range: BinRange,
    pub entropy_base: LogBase,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            ece_bins: 9,
            bin_range: BinRange::Unit,
            entropy_base: LogBase::Natural,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub num_samples: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub avg_entropy: f64,
    pub mean_confidence: f64,
    pub ece: f64,
    pub options: ReportOptions,
    pub bins: Vec<BinStat>,
}

impl CalibrationReport {
    pub fn compute(preds: &PredictionSet, options: &ReportOptions) -> Result<Self> {
        let e = ece(preds, options.ece_bins, options.bin_range)?;
        Ok(Self {
            num_samples: preds.len(),
            accuracy: accuracy(preds),
            macro_f1: macro_f1(preds),
            avg_entropy: avg_entropy(preds, options.entropy_base),
            mean_confidence: preds.mean_confidence(),
            ece: e.ece,
            options: *options,
            bins: e.bins,
        })
    }

    pub const CSV_HEADER: &'static str =
        "num_samples,accuracy,macro_f1,avg_entropy,mean_confidence,ece";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.num_samples,
            self.accuracy,
            self.macro_f1,
            self.avg_entropy,
            self.mean_confidence,
            self.ece
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(probs: &[[f64; 2]], labels: &[usize]) -> PredictionSet {
        PredictionSet::new(probs.iter().map(|p| p.to_vec()).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn confident_and_correct_has_zero_ece() {
        let ps = set(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1]);
        assert_eq!(ece(&ps, 9, BinRange::Unit).unwrap().ece, 0.0);
    }

    #[test]
    fn hand_case() {
        let ps = set(&[[0.8, 0.2]; 4], &[0, 0, 1, 1]);
        let r = ece(&ps, 9, BinRange::Unit).unwrap();
        assert!((r.ece - 0.3).abs() < 1e-15, "{}", r.ece);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(r.bins.iter().filter(|b| b.count > 0).count(), 1);
    }

    #[test]
    fn right_inclusive_edges() {
        // With 2 bins over [0.5, 1], 0.75 sits on the edge and belongs to bin 0.
        let ps = set(&[[0.75, 0.25], [0.5, 0.5]], &[0, 0]);
        let r = ece(&ps, 2, BinRange::AboveChance).unwrap();
        assert_eq!(r.bins[0].count, 2);
        assert_eq!(r.bins[1].count, 0);
        assert_eq!(r.bins[1].upper, 1.0);
    }

    #[test]
    fn one_bin_equals_global_gap() {
        let ps = set(&[[0.9, 0.1], [0.6, 0.4], [0.3, 0.7]], &[0, 1, 1]);
        let r = ece(&ps, 1, BinRange::Unit).unwrap();
        let gap = (accuracy(&ps) - ps.mean_confidence()).abs();
        assert!((r.ece - gap).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_rejected() {
        let ps = PredictionSet::new(vec![], vec![]).unwrap();
        assert!(ece(&ps, 9, BinRange::Unit).is_err());
    }

    #[test]
    fn macro_f1_cases() {
        let perfect = set(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1]);
        assert_eq!(macro_f1(&perfect), 1.0);
        // TP=1, FP=1, FN=1, TN=1 for class 1.
        let mixed = set(&[[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]], &[1, 0, 1, 0]);
        assert!((macro_f1(&mixed) - 0.5).abs() < 1e-15);
        let one_class = set(&[[1.0, 0.0]; 4], &[0, 0, 1, 1]);
        assert!((macro_f1(&one_class) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_contributes_zero() {
        let ps = PredictionSet::new(vec![vec![1.0, 0.0, 0.0]], vec![0]).unwrap();
        assert!((macro_f1(&ps) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn avg_entropy_cases() {
        let third = 1.0 / 3.0;
        let uniform = PredictionSet::new(vec![vec![third; 3]; 2], vec![0, 1]).unwrap();
        assert!((avg_entropy(&uniform, LogBase::Natural) - 3f64.ln()).abs() < 1e-12);
        let onehot = set(&[[1.0, 0.0]], &[0]);
        assert_eq!(avg_entropy(&onehot, LogBase::Natural), 0.0);
        let mixed = set(&[[1.0, 0.0], [0.5, 0.5]], &[0, 0]);
        assert!((avg_entropy(&mixed, LogBase::Natural) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn report_is_recomputable_from_bins() {
        let ps = set(&[[0.9, 0.1], [0.6, 0.4], [0.3, 0.7], [0.55, 0.45]], &[0, 1, 1, 1]);
        let r = CalibrationReport::compute(&ps, &ReportOptions::default()).unwrap();
        assert_eq!(r.ece, ece_from_bins(&r.bins));
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), r.num_samples);
        assert_eq!(r.csv_row().split(',').count(), CalibrationReport::CSV_HEADER.split(',').count());
    }
}
