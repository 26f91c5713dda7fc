//! Interpretation of a trained CUE model: latent-dimension influence
//! scores, token attribution and latent-dimension removal.

mod ablation;
mod ufi;

pub use ablation::{
    ablate_dims, aggregate_order, write_ablation_csv, AblationConfig, AblationCurve, AblationMode,
    AblationPoint, RankAggregation, ABLATION_CSV_HEADER,
};
pub use ufi::{
    dim_scores, influential_rep, rank_descending, token_scores, ufi, DimScore, LatentAttribution,
    TokenScore, UfiReport,
};
