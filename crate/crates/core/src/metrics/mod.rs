//! Calibration and uncertainty metrics: ECE with per-bin statistics,
//! accuracy, macro-F1, average entropy, a bias-variance decomposition check
//! and rank correlation.

mod calibration;
mod predictions;
mod stats;

pub use calibration::{
    accuracy, avg_entropy, ece, ece_from_bins, macro_f1, BinRange, BinStat, CalibrationReport,
    EceResult, ReportOptions,
};
pub use predictions::PredictionSet;
pub use stats::{average_ranks, decomposition_check, pearson, spearman, Decomposition};
