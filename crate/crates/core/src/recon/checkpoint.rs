//! Single-file checkpoints: one line of JSON manifest, a newline, then the
//! raw little-endian `f64` payload the manifest describes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, ReconOperator};
use crate::autodiff::{Precision, Tensor};
use crate::data::blob::{major_version, push_real, read_real, sha256_hex};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1.0";
const FORMAT: &str = "advrec-checkpoint";
const RECORD: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointManifest {
    format: String,
    version: String,
    dtype: String,
    precision: Precision,
    model: ModelSpec,
    tensors: Vec<ParamEntry>,
    payload_bytes: u64,
    sha256: String,
}

pub fn save_checkpoint(model: &ReconOperator, path: &Path) -> Result<()> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in model.params() {
        let offset = payload.len() as u64;
        push_real(&mut payload, t.as_real().expect("parameters are real"));
        tensors.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION.into(),
        dtype: "f64-le".into(),
        precision: model.precision(),
        model: model.spec().clone(),
        tensors,
        payload_bytes: payload.len() as u64,
        sha256: sha256_hex(&payload),
    };
    let header = serde_json::to_string(&manifest)?;
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(header.as_bytes())?;
    f.write_all(b"\n")?;
    f.write_all(&payload)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ReconOperator> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingCheckpoint(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Manifest("checkpoint has no manifest line".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[..split])?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
        return Err(Error::Manifest(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    }
    let version = raw.get("version").and_then(|v| v.as_str()).unwrap_or("");
    match major_version(version) {
        Some(1) => {}
        Some(_) => {
            return Err(Error::Version {
                found: version.into(),
                supported: 1,
            })
        }
        None => return Err(Error::Manifest(format!("malformed version {version:?}"))),
    }
    let m: CheckpointManifest = serde_json::from_value(raw)?;
    let payload = &bytes[split + 1..];
    if (payload.len() as u64) < m.payload_bytes {
        return Err(Error::Truncated {
            record: RECORD.into(),
            expected: m.payload_bytes as usize,
            found: payload.len(),
        });
    }
    if payload.len() as u64 != m.payload_bytes || sha256_hex(payload) != m.sha256 {
        return Err(Error::Checksum {
            record: RECORD.into(),
        });
    }
    let mut params = BTreeMap::new();
    for e in &m.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + 8 * n;
        if end > payload.len() {
            return Err(Error::Manifest(format!(
                "tensor {} extends past the payload",
                e.name
            )));
        }
        params.insert(
            e.name.clone(),
            Tensor::real(&e.shape, read_real(&payload[start..end]))?,
        );
    }
    ReconOperator::from_parts(m.model, params, m.precision)
}
