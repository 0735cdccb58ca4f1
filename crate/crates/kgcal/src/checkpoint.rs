//! Model checkpoints.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "KGCALCKP"
//! version  u32
//! kind     u8       0 TransE, 1 DistMult, 2 ComplEx, 3 HolE
//! norm     u8       TransE norm order, 0 otherwise
//! k, |E|, |R|, seed: u64 each
//! entity matrix, then relation matrix: row-major f64
//! ```
//!
//! A JSON sidecar `<file>.json` records the dictionary hash so a checkpoint
//! is never applied to a dataset with different ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kgcal_core::{Dictionary, EmbeddingModel, ModelKind, NormOrder};

use crate::error::{KgcalError, Result};

const MAGIC: &[u8; 8] = b"KGCALCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format_version: u32,
    pub model: String,
    pub k: usize,
    pub entities: usize,
    pub relations: usize,
    pub seed: u64,
    pub dictionary_hash: String,
}

/// SHA-256 over the entity labels then the relation labels, in id order.
pub fn dictionary_hash(entities: &Dictionary, relations: &Dictionary) -> String {
    let mut h = Sha256::new();
    for (tag, dict) in [(b'E', entities), (b'R', relations)] {
        h.update([tag]);
        h.update((dict.len() as u64).to_le_bytes());
        for label in dict.labels() {
            h.update((label.len() as u64).to_le_bytes());
            h.update(label.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn kind_code(kind: ModelKind) -> (u8, u8) {
    match kind {
        ModelKind::TransE { norm } => (0, norm.order()),
        ModelKind::DistMult => (1, 0),
        ModelKind::ComplEx => (2, 0),
        ModelKind::HolE => (3, 0),
    }
}

fn kind_from_code(kind: u8, norm: u8) -> Option<ModelKind> {
    match kind {
        0 => NormOrder::from_order(norm).ok().map(|norm| ModelKind::TransE { norm }),
        1 => Some(ModelKind::DistMult),
        2 => Some(ModelKind::ComplEx),
        3 => Some(ModelKind::HolE),
        _ => None,
    }
}

/// Serialises `model` to bytes.
pub fn encode(model: &EmbeddingModel) -> Vec<u8> {
    let floats = model.entity_matrix().len() + model.relation_matrix().len();
    let mut out = Vec::with_capacity(8 + 4 + 2 + 32 + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (kind, norm) = kind_code(model.kind());
    out.extend_from_slice(&[kind, norm]);
    for v in [model.k() as u64, model.num_entities() as u64, model.num_relations() as u64, model.seed()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in model.entity_matrix().iter().chain(model.relation_matrix()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses bytes written by [`encode`]. `path` is used in diagnostics only.
pub fn decode(bytes: &[u8], path: &Path) -> Result<EmbeddingModel> {
    let bad = |msg: &str| KgcalError::format(path, msg);
    let mut rest = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(bad("truncated checkpoint"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a kgcal checkpoint"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let codes = take(2)?;
    let kind = kind_from_code(codes[0], codes[1]).ok_or_else(|| bad("unknown model kind"))?;
    let mut header = [0u64; 4];
    for v in &mut header {
        *v = u64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let [k, entities, relations, seed] = header;
    let width = kind.row_width(k as usize);
    let entity_len = (entities as usize)
        .checked_mul(width)
        .ok_or_else(|| bad("matrix size overflows"))?;
    let relation_len = (relations as usize)
        .checked_mul(width)
        .ok_or_else(|| bad("matrix size overflows"))?;
    let mut read_matrix = |len: usize| -> Result<Vec<f64>> {
        let raw = take(len.checked_mul(8).ok_or_else(|| bad("matrix size overflows"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let entity = read_matrix(entity_len)?;
    let relation = read_matrix(relation_len)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after matrices"));
    }
    Ok(EmbeddingModel::from_parts(
        kind,
        k as usize,
        entities as usize,
        relations as usize,
        seed,
        entity,
        relation,
    )?)
}

/// Writes the checkpoint and its sidecar.
pub fn save_checkpoint(path: &Path, model: &EmbeddingModel, dictionary_hash: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| KgcalError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| KgcalError::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&encode(model))
        .and_then(|_| out.flush())
        .map_err(|e| KgcalError::io(path, e))?;
    let sidecar = CheckpointSidecar {
        format_version: VERSION,
        model: model.kind().to_string(),
        k: model.k(),
        entities: model.num_entities(),
        relations: model.num_relations(),
        seed: model.seed(),
        dictionary_hash: dictionary_hash.to_string(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(&side, json + "\n").map_err(|e| KgcalError::io(&side, e))
}

/// Loads a checkpoint. With `expected_hash` set, the sidecar must exist and
/// record the same dictionary hash.
pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<EmbeddingModel> {
    let file = File::open(path).map_err(|e| KgcalError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| KgcalError::io(path, e))?;
    let model = decode(&bytes, path)?;
    if let Some(expected) = expected_hash {
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| KgcalError::io(&side, e))?;
        let sidecar: CheckpointSidecar = serde_json::from_str(&text)?;
        if sidecar.dictionary_hash != expected {
            return Err(KgcalError::format(
                path,
                "checkpoint was trained on a dataset with different dictionaries",
            ));
        }
    }
    Ok(model)
}
