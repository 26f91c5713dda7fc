//! Model checkpoints.
//!
//! ```text
//! <path>       "CUEM" | u32 version | u8 role | u32 tensor count |
//!              per tensor: u32 rows, u32 cols | all payloads as f64
//! <path>.json  format, version, role, shapes, sha256 of <path>, meta
//! ```
//!
//! Role tags are 0 head, 1 bnn, 2 cue. A head always loads frozen.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{BayesLinearPlugin, LinearSoftmaxHead};
use crate::codec::{read_file, sha256_hex, to_json_bytes, write_file, ByteReader, ByteWriter};
use crate::cue::CueModel;
use crate::error::{CueError, Result};
use crate::numerics::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"CUEM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Head,
    Bnn,
    Cue,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Head => 0,
            Role::Bnn => 1,
            Role::Cue => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Role::Head),
            1 => Some(Role::Bnn),
            2 => Some(Role::Cue),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Head => "head",
            Role::Bnn => "bnn",
            Role::Cue => "cue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub role: Role,
    pub shapes: Vec<(usize, usize)>,
    pub sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: Role,
    pub tensors: Vec<DenseMatrix>,
    pub meta: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn encode(role: Role, tensors: &[DenseMatrix]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(role.tag());
    w.count(tensors.len(), "tensor count")?;
    for t in tensors {
        w.count(t.rows(), "tensor rows")?;
        w.count(t.cols(), "tensor cols")?;
    }
    for t in tensors {
        w.f64s(t.as_slice());
    }
    Ok(w.finish())
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = encode(checkpoint.role, &checkpoint.tensors)?;
    let sidecar = Sidecar {
        format: "CUEM".into(),
        version: FORMAT_VERSION,
        role: checkpoint.role,
        shapes: checkpoint.tensors.iter().map(DenseMatrix::shape).collect(),
        sha256: sha256_hex(&bytes),
        meta: checkpoint.meta.clone(),
    };
    write_file(path, &bytes)?;
    write_file(&sidecar_path(path), &to_json_bytes(&sidecar)?)
}

/// Loads and checks a checkpoint: structure, then digest, then role and
/// sidecar agreement.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_file(path)?;
    let side_path = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_slice(&read_file(&side_path)?)
        .map_err(|e| CueError::Format(format!("{}: {e}", side_path.display())))?;

    let name = path.display().to_string();
    let mut r = ByteReader::new(&bytes, &name);
    r.expect_magic(MAGIC)?;
    r.expect_version(FORMAT_VERSION)?;
    let tag = r.u8()?;
    let role = Role::from_tag(tag)
        .ok_or_else(|| CueError::Format(format!("{name}: unknown role tag {tag}")))?;
    let count = r.u32()? as usize;
    let mut shapes = Vec::new();
    for _ in 0..count {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    let mut tensors = Vec::with_capacity(count);
    for &(rows, cols) in &shapes {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| CueError::Format(format!("{name}: tensor size overflow")))?;
        tensors.push((rows, cols, r.f64s(n)?));
    }
    r.finish()?;

    let digest = sha256_hex(&bytes);
    if digest != sidecar.sha256 {
        return Err(CueError::Integrity(format!(
            "{name}: sha256 {digest} does not match sidecar {}",
            sidecar.sha256
        )));
    }
    if sidecar.format != "CUEM" || sidecar.version != FORMAT_VERSION {
        return Err(CueError::Format(format!(
            "{}: unexpected format {} version {}",
            side_path.display(),
            sidecar.format,
            sidecar.version
        )));
    }
    if sidecar.role != role || sidecar.shapes != shapes {
        return Err(CueError::Validation(format!(
            "{name}: sidecar role or shapes disagree with the payload"
        )));
    }
    let tensors = tensors
        .into_iter()
        .map(|(rows, cols, v)| {
            DenseMatrix::from_vec(rows, cols, v)
                .map_err(|e| CueError::Validation(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        role,
        tensors,
        meta: sidecar.meta,
    })
}

fn load_role(path: &Path, role: Role) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.role != role {
        return Err(CueError::Validation(format!(
            "{}: holds a {} checkpoint, expected {}",
            path.display(),
            ck.role.as_str(),
            role.as_str()
        )));
    }
    Ok(ck)
}

fn validation(path: &Path, e: CueError) -> CueError {
    CueError::Validation(format!("{}: {e}", path.display()))
}

pub fn save_head(path: &Path, head: &LinearSoftmaxHead, meta: serde_json::Value) -> Result<()> {
    let bias = DenseMatrix::from_vec(1, head.num_classes(), head.bias().to_vec())?;
    save_checkpoint(
        path,
        &Checkpoint {
            role: Role::Head,
            tensors: vec![head.weights().clone(), bias],
            meta,
        },
    )
}

/// Loads a head, frozen.
pub fn load_head(path: &Path) -> Result<(LinearSoftmaxHead, serde_json::Value)> {
    let mut ck = load_role(path, Role::Head)?;
    if ck.tensors.len() != 2 {
        return Err(validation(path, crate::error::invalid_arg!("head needs 2 tensors")));
    }
    let bias = ck.tensors.pop().expect("len 2").into_vec();
    let weights = ck.tensors.pop().expect("len 2");
    let head = LinearSoftmaxHead::from_parts(weights, bias).map_err(|e| validation(path, e))?;
    Ok((head.freeze(), ck.meta))
}

pub fn save_cue(path: &Path, model: &CueModel, meta: serde_json::Value) -> Result<()> {
    save_checkpoint(
        path,
        &Checkpoint {
            role: Role::Cue,
            tensors: model.tensors(),
            meta,
        },
    )
}

pub fn load_cue(path: &Path) -> Result<(CueModel, serde_json::Value)> {
    let ck = load_role(path, Role::Cue)?;
    let model = CueModel::from_tensors(ck.tensors).map_err(|e| validation(path, e))?;
    Ok((model, ck.meta))
}

/// The prior scale is stored in the sidecar as `meta.prior_sigma`.
pub fn save_bnn(path: &Path, plugin: &BayesLinearPlugin, meta: serde_json::Value) -> Result<()> {
    let mut meta = match meta {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("run".into(), other);
            m
        }
    };
    meta.insert("prior_sigma".into(), plugin.prior_sigma().into());
    save_checkpoint(
        path,
        &Checkpoint {
            role: Role::Bnn,
            tensors: plugin.tensors(),
            meta: serde_json::Value::Object(meta),
        },
    )
}

pub fn load_bnn(path: &Path) -> Result<(BayesLinearPlugin, serde_json::Value)> {
    let ck = load_role(path, Role::Bnn)?;
    let prior_sigma = ck
        .meta
        .get("prior_sigma")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| CueError::Validation(format!("{}: sidecar lacks meta.prior_sigma", path.display())))?;
    let plugin = BayesLinearPlugin::from_tensors(ck.tensors, prior_sigma).map_err(|e| validation(path, e))?;
    Ok((plugin, ck.meta))
}
