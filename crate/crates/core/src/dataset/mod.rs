//! Embedding datasets: in-memory type, the CUED on-disk format, stratified
//! splitting and synthetic generation.

mod format;
mod split;
mod synth;
mod types;

pub use format::{
    load_dataset, read_manifest, save_dataset, Manifest, EMBEDDINGS_FILE, FORMAT_VERSION,
    LABELS_FILE, MANIFEST_FILE, SPLITS_FILE, TOKENS_FILE,
};
pub use split::split;
pub use synth::{
    synth_gaussian_mixture, synth_with_truth, SampleTruth, SyntheticConfig, SyntheticData,
    CUE_TOKEN_TEXT,
};
pub use types::{EmbeddingDataset, SplitTag, Token};
