//! The CUED on-disk dataset layout.
//!
//! A dataset is a directory:
//!
//! ```text
//! manifest.json   version, D, K, N, class names, token flag, SHA-256 per payload
//! embeddings.bin  "CUED" | u32 version | u32 rows | u32 cols | rows*cols f64
//! labels.bin      "CUED" | u32 version | u32 N | N u32
//! tokens.bin      "CUED" | u32 version | per sample: u32 count,
//!                 per token: u32 byte length, UTF-8 bytes, D f64   (optional)
//! splits.bin      "CUED" | u32 version | N u8 (0 train, 1 dev, 2 test)
//! ```
//!
//! All integers and floats are little-endian. Loading checks structure
//! first (format errors), then digests (integrity errors), then semantic
//! invariants (validation errors).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{EmbeddingDataset, SplitTag, Token};
use crate::codec::{read_file, sha256_hex, to_json_bytes, write_file, ByteReader, ByteWriter};
use crate::error::{CueError, Result};
use crate::numerics::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"CUED";
pub const FORMAT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const TOKENS_FILE: &str = "tokens.bin";
pub const SPLITS_FILE: &str = "splits.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub num_samples: usize,
    pub class_names: Vec<String>,
    pub has_tokens: bool,
    /// Payload file name to lowercase hex SHA-256.
    pub digests: BTreeMap<String, String>,
}

fn header(w: &mut ByteWriter) {
    w.bytes(MAGIC);
    w.u32(FORMAT_VERSION);
}

fn encode_embeddings(m: &DenseMatrix) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    header(&mut w);
    w.count(m.rows(), "row count")?;
    w.count(m.cols(), "column count")?;
    w.f64s(m.as_slice());
    Ok(w.finish())
}

fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    header(&mut w);
    w.count(labels.len(), "sample count")?;
    for &y in labels {
        w.count(y, "label")?;
    }
    Ok(w.finish())
}

fn encode_tokens(table: &[Vec<Token>]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    header(&mut w);
    for toks in table {
        w.count(toks.len(), "token count")?;
        for t in toks {
            w.count(t.text.len(), "token byte length")?;
            w.bytes(t.text.as_bytes());
            w.f64s(&t.vector);
        }
    }
    Ok(w.finish())
}

fn encode_splits(splits: &[SplitTag]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    header(&mut w);
    for s in splits {
        w.u8(s.code());
    }
    w.finish()
}

/// Writes `dataset` into directory `dir`, creating it if needed.
///
/// Output bytes depend only on the dataset contents.
pub fn save_dataset(dataset: &EmbeddingDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| CueError::io(dir, e))?;

    let mut payloads = vec![
        (EMBEDDINGS_FILE, encode_embeddings(dataset.embeddings())?),
        (LABELS_FILE, encode_labels(dataset.labels())?),
        (SPLITS_FILE, encode_splits(dataset.splits())),
    ];
    if let Some(table) = dataset.token_table() {
        payloads.push((TOKENS_FILE, encode_tokens(table)?));
    }

    let mut digests = BTreeMap::new();
    for (name, bytes) in &payloads {
        write_file(&dir.join(name), bytes)?;
        digests.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = Manifest {
        format: "CUED".into(),
        version: FORMAT_VERSION,
        embed_dim: dataset.embed_dim(),
        num_classes: dataset.num_classes(),
        num_samples: dataset.len(),
        class_names: dataset.class_names().to_vec(),
        has_tokens: dataset.has_tokens(),
        digests,
    };
    write_file(&dir.join(MANIFEST_FILE), &to_json_bytes(&manifest)?)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| CueError::Format(format!("{}: {e}", path.display())))?;
    if manifest.format != "CUED" {
        return Err(CueError::Format(format!(
            "{}: format tag {:?}, expected \"CUED\"",
            path.display(),
            manifest.format
        )));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(CueError::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            manifest.version
        )));
    }
    Ok(manifest)
}

struct Payload {
    name: &'static str,
    bytes: Vec<u8>,
}

impl Payload {
    fn read(dir: &Path, name: &'static str) -> Result<Self> {
        Ok(Self {
            name,
            bytes: read_file(&dir.join(name))?,
        })
    }

    fn reader(&self) -> Result<ByteReader<'_>> {
        let mut r = ByteReader::new(&self.bytes, self.name);
        r.expect_magic(MAGIC)?;
        r.expect_version(FORMAT_VERSION)?;
        Ok(r)
    }

    fn verify(&self, manifest: &Manifest) -> Result<()> {
        let expected = manifest.digests.get(self.name).ok_or_else(|| {
            CueError::Integrity(format!("manifest lists no digest for {}", self.name))
        })?;
        let actual = sha256_hex(&self.bytes);
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(CueError::Integrity(format!(
                "{}: SHA-256 {actual} does not match manifest {expected}",
                self.name
            )));
        }
        Ok(())
    }
}

fn check_dim(name: &str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(CueError::Validation(format!(
            "{name}: {what} {got} disagrees with manifest value {want}"
        )));
    }
    Ok(())
}

/// Loads and fully validates a CUED directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let (n, d) = (manifest.num_samples, manifest.embed_dim);

    let emb = Payload::read(dir, EMBEDDINGS_FILE)?;
    let mut r = emb.reader()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let values = r.f64s(rows.checked_mul(cols).ok_or_else(|| {
        CueError::Format(format!("{EMBEDDINGS_FILE}: shape {rows}x{cols} overflows"))
    })?)?;
    r.finish()?;

    let lab = Payload::read(dir, LABELS_FILE)?;
    let mut r = lab.reader()?;
    let n_labels = r.u32()? as usize;
    let labels = (0..n_labels)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;

    let spl = Payload::read(dir, SPLITS_FILE)?;
    let mut r = spl.reader()?;
    let split_codes = (0..n).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
    r.finish()?;

    let tok = if manifest.has_tokens {
        let p = Payload::read(dir, TOKENS_FILE)?;
        let mut r = p.reader()?;
        let mut table = Vec::with_capacity(n);
        for _ in 0..n {
            let count = r.u32()? as usize;
            let mut toks = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let len = r.u32()? as usize;
                let text = r.utf8(len)?;
                let vector = r.f64s(d)?;
                toks.push(Token { text, vector });
            }
            table.push(toks);
        }
        r.finish()?;
        Some((p, table))
    } else {
        None
    };

    emb.verify(&manifest)?;
    lab.verify(&manifest)?;
    spl.verify(&manifest)?;
    if let Some((p, _)) = &tok {
        p.verify(&manifest)?;
    }

    check_dim(EMBEDDINGS_FILE, "row count", rows, n)?;
    check_dim(EMBEDDINGS_FILE, "column count", cols, d)?;
    check_dim(LABELS_FILE, "label count", n_labels, n)?;
    let splits = split_codes
        .iter()
        .enumerate()
        .map(|(row, &c)| {
            SplitTag::from_code(c).ok_or_else(|| {
                CueError::Validation(format!("{SPLITS_FILE}: row {row} has unknown split tag {c}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let embeddings = DenseMatrix::from_vec(rows, cols, values)
        .map_err(|e| CueError::Validation(format!("{EMBEDDINGS_FILE}: {e}")))?;

    EmbeddingDataset::with_all(
        embeddings,
        labels,
        manifest.num_classes,
        Some(manifest.class_names),
        tok.map(|(_, t)| t),
        splits,
    )
}
