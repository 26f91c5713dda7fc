use serde::{Deserialize, Serialize};

use crate::error::{CueError, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl SplitTag {
    pub fn code(self) -> u8 {
        match self {
            SplitTag::Train => 0,
            SplitTag::Dev => 1,
            SplitTag::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SplitTag::Train),
            1 => Some(SplitTag::Dev),
            2 => Some(SplitTag::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitTag {
    type Err = CueError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "dev" => Ok(SplitTag::Dev),
            "test" => Ok(SplitTag::Test),
            other => Err(CueError::InvalidArgument(format!(
                "unknown split {other:?}, expected train, dev or test"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub text: String,
    pub vector: Vec<f64>,
}

/// Sequence embeddings with labels, split tags and optional token tables.
///
/// Construction validates every invariant, so a value of this type is always
/// internally consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    embeddings: DenseMatrix,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Vec<String>,
    tokens: Option<Vec<Vec<Token>>>,
    splits: Vec<SplitTag>,
}

impl EmbeddingDataset {
    /// Builds a dataset with every sample tagged as training data.
    pub fn new(
        embeddings: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Option<Vec<String>>,
        tokens: Option<Vec<Vec<Token>>>,
    ) -> Result<Self> {
        let n = embeddings.rows();
        Self::with_all(
            embeddings,
            labels,
            num_classes,
            class_names,
            tokens,
            vec![SplitTag::Train; n],
        )
    }

    pub fn with_all(
        embeddings: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Option<Vec<String>>,
        tokens: Option<Vec<Vec<Token>>>,
        splits: Vec<SplitTag>,
    ) -> Result<Self> {
        let n = embeddings.rows();
        let d = embeddings.cols();
        let invalid = |msg: String| Err(CueError::Validation(msg));
        if n == 0 {
            return invalid("dataset has no samples".into());
        }
        if d == 0 {
            return invalid("embedding dimension is zero".into());
        }
        if num_classes < 2 {
            return invalid(format!("need at least 2 classes, got {num_classes}"));
        }
        if !embeddings.is_finite() {
            return invalid("embedding matrix contains non-finite values".into());
        }
        if labels.len() != n {
            return invalid(format!("{} labels for {n} samples", labels.len()));
        }
        if let Some(row) = labels.iter().position(|&y| y >= num_classes) {
            return invalid(format!(
                "row {row}: label {} out of range for {num_classes} classes",
                labels[row]
            ));
        }
        if splits.len() != n {
            return invalid(format!("{} split tags for {n} samples", splits.len()));
        }
        let class_names =
            class_names.unwrap_or_else(|| (0..num_classes).map(|k| format!("class_{k}")).collect());
        if class_names.len() != num_classes {
            return invalid(format!(
                "{} class names for {num_classes} classes",
                class_names.len()
            ));
        }
        if let Some(table) = &tokens {
            if table.len() != n {
                return invalid(format!("token table covers {} of {n} samples", table.len()));
            }
            for (row, toks) in table.iter().enumerate() {
                for (j, t) in toks.iter().enumerate() {
                    if t.vector.len() != d {
                        return invalid(format!(
                            "row {row} token {j}: vector length {} differs from embedding dim {d}",
                            t.vector.len()
                        ));
                    }
                    if t.vector.iter().any(|v| !v.is_finite()) {
                        return invalid(format!("row {row} token {j}: non-finite vector"));
                    }
                }
            }
        }
        Ok(Self {
            embeddings,
            labels,
            num_classes,
            class_names,
            tokens,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn embeddings(&self) -> &DenseMatrix {
        &self.embeddings
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn has_tokens(&self) -> bool {
        self.tokens.is_some()
    }

    pub fn token_table(&self) -> Option<&[Vec<Token>]> {
        self.tokens.as_deref()
    }

    pub fn tokens(&self, i: usize) -> Option<&[Token]> {
        self.tokens.as_ref().map(|t| t[i].as_slice())
    }

    pub fn splits(&self) -> &[SplitTag] {
        &self.splits
    }

    pub fn split_of(&self, i: usize) -> SplitTag {
        self.splits[i]
    }

    /// Sample indices carrying `tag`, in ascending order.
    pub fn split_indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == tag).collect()
    }

    pub fn with_splits(mut self, splits: Vec<SplitTag>) -> Result<Self> {
        if splits.len() != self.len() {
            return Err(CueError::Validation(format!(
                "{} split tags for {} samples",
                splits.len(),
                self.len()
            )));
        }
        self.splits = splits;
        Ok(self)
    }
}
