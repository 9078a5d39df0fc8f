//! On-disk checkpoint archive.
//!
//! A checkpoint is a directory holding
//! - `manifest.json`: format version, model name, role, architecture,
//!   provenance, one entry per parameter (name, shape, dtype, byte offset)
//!   and the content hash of the state;
//! - `params.bin`: every parameter value as little-endian `f64`, concatenated
//!   in manifest order.
//!
//! Loading recomputes the content hash and rejects any mismatch.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::ArchitectureSpec;
use super::state::{ModelRole, ModelState, ParamMap, ParamTensor, Provenance};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "params.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub name: String,
    pub role: ModelRole,
    pub arch: ArchitectureSpec,
    pub provenance: Provenance,
    pub parameters: Vec<ParamEntry>,
    pub content_hash: String,
}

pub fn save(state: &ModelState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut payload = Vec::with_capacity(state.num_parameters() * 8);
    let mut parameters = Vec::with_capacity(state.params.len());
    for (name, p) in &state.params {
        parameters.push(ParamEntry {
            name: name.clone(),
            shape: p.shape.clone(),
            dtype: "f64le".into(),
            offset: payload.len() as u64,
        });
        for v in &p.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        name: state.name.clone(),
        role: state.role,
        arch: state.arch.clone(),
        provenance: state.provenance,
        parameters,
        content_hash: state.content_hash(),
    };
    let payload_path = dir.join(PAYLOAD_FILE);
    fs::write(&payload_path, &payload).map_err(|e| Error::io(&payload_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Integrity {
            path,
            message: format!("unsupported format version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<ModelState> {
    let manifest = read_manifest(dir)?;
    let payload_path = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let integrity = |message: String| Error::Integrity {
        path: dir.to_path_buf(),
        message,
    };

    let mut params = ParamMap::new();
    let mut cursor = 0usize;
    for entry in &manifest.parameters {
        if entry.dtype != "f64le" {
            return Err(integrity(format!("unsupported dtype `{}`", entry.dtype)));
        }
        if entry.offset as usize != cursor {
            return Err(integrity(format!("`{}` has unexpected offset", entry.name)));
        }
        let n: usize = entry.shape.iter().product();
        let end = cursor + n * 8;
        let raw = bytes
            .get(cursor..end)
            .ok_or_else(|| integrity(format!("payload truncated at `{}`", entry.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(
            entry.name.clone(),
            ParamTensor {
                shape: entry.shape.clone(),
                data,
            },
        );
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(integrity("payload has trailing bytes".into()));
    }

    let state = ModelState {
        name: manifest.name,
        role: manifest.role,
        arch: manifest.arch,
        params,
        provenance: manifest.provenance,
    };
    state.validate()?;
    let hash = state.content_hash();
    if hash != manifest.content_hash {
        return Err(integrity(format!(
            "content hash {hash} does not match manifest {}",
            manifest.content_hash
        )));
    }
    Ok(state)
}
