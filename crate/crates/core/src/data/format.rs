use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::blob::{major_version, push_complex, push_real, read_complex, read_real, sha256_hex};
use super::phantom::{AnnotationBox, Phantom};
use crate::autodiff::{Data, Tensor};
use crate::error::{Error, Result};
use crate::mri::{ReconImage, SensitivityMaps};

pub const FORMAT_VERSION: &str = "1.0";
pub const SUPPORTED_MAJOR: u32 = 1;
pub const DTYPE: &str = "f64-le";

/// What a dataset's records hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Phantom,
    Perturbation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    /// Byte offset inside the record blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<AnnotationBox>,
    pub blob: String,
    pub bytes: u64,
    pub sha256: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub dtype: String,
    pub kind: RecordKind,
    pub records: Vec<RecordEntry>,
}

/// A generic record: named tensors plus a seed and optional annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub id: String,
    pub seed: u64,
    pub annotations: Vec<AnnotationBox>,
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorRecord {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn encode(record: &TensorRecord) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut buf = Vec::new();
    let mut entries = Vec::with_capacity(record.tensors.len());
    for (name, t) in &record.tensors {
        let offset = buf.len() as u64;
        let kind = match t.data() {
            Data::Real(v) => {
                push_real(&mut buf, v);
                TensorKind::Real
            }
            Data::Complex(v) => {
                push_complex(&mut buf, v);
                TensorKind::Complex
            }
        };
        entries.push(TensorEntry {
            name: name.clone(),
            kind,
            shape: t.shape().to_vec(),
            offset,
        });
    }
    (buf, entries)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Writes `manifest.json` and `blobs/<id>.bin` into `dir`.
///
/// Everything is staged in a sibling temporary directory and renamed into
/// place, so a failure never leaves a partial dataset behind. An existing
/// dataset at `dir` is replaced; any other non-empty directory is refused.
pub fn save_records(
    dir: &Path,
    kind: RecordKind,
    records: &[TensorRecord],
) -> Result<DatasetManifest> {
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !valid_id(&r.id) || !seen.insert(r.id.as_str()) {
            return Err(Error::invalid(format!(
                "record id {:?} is invalid or duplicated",
                r.id
            )));
        }
    }
    if dir.exists() {
        let replaceable =
            dir.join("manifest.json").is_file() || fs::read_dir(dir)?.next().is_none();
        if !replaceable {
            return Err(Error::invalid(format!(
                "{} exists and is not a dataset; refusing to overwrite",
                dir.display()
            )));
        }
    }
    let staging = staging_dir(dir)?;
    let result = write_into(&staging, kind, records).and_then(|m| {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(m)
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn staging_dir(dir: &Path) -> Result<PathBuf> {
    let name = dir
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no final component", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(staging.join("blobs"))?;
    Ok(staging)
}

fn write_into(root: &Path, kind: RecordKind, records: &[TensorRecord]) -> Result<DatasetManifest> {
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let (bytes, tensors) = encode(r);
        let blob = format!("blobs/{}.bin", r.id);
        fs::write(root.join(&blob), &bytes)?;
        entries.push(RecordEntry {
            id: r.id.clone(),
            seed: r.seed,
            annotations: r.annotations.clone(),
            blob,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
            tensors,
        });
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION.into(),
        dtype: DTYPE.into(),
        kind,
        records: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(root.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Reads the manifest without touching any blob.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Manifest("manifest has no version string".into()))?;
    match major_version(version) {
        Some(SUPPORTED_MAJOR) => {}
        Some(_) => {
            return Err(Error::Version {
                found: version.into(),
                supported: SUPPORTED_MAJOR,
            })
        }
        None => return Err(Error::Manifest(format!("malformed version {version:?}"))),
    }
    let m: DatasetManifest = serde_json::from_value(raw)?;
    if m.dtype != DTYPE {
        return Err(Error::Manifest(format!(
            "dtype {:?}, expected {DTYPE:?}",
            m.dtype
        )));
    }
    Ok(m)
}

fn decode(dir: &Path, entry: &RecordEntry) -> Result<TensorRecord> {
    if entry.blob.contains("..") || Path::new(&entry.blob).is_absolute() {
        return Err(Error::Manifest(format!(
            "record {} blob path escapes dataset",
            entry.id
        )));
    }
    let bytes = fs::read(dir.join(&entry.blob))?;
    if (bytes.len() as u64) < entry.bytes {
        return Err(Error::Truncated {
            record: entry.id.clone(),
            expected: entry.bytes as usize,
            found: bytes.len(),
        });
    }
    if bytes.len() as u64 != entry.bytes || sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::Checksum {
            record: entry.id.clone(),
        });
    }
    let mut tensors = Vec::with_capacity(entry.tensors.len());
    for t in &entry.tensors {
        let numel: usize = t.shape.iter().product();
        let width = match t.kind {
            TensorKind::Real => 8,
            TensorKind::Complex => 16,
        };
        let start = t.offset as usize;
        let end = start + numel * width;
        if end > bytes.len() {
            return Err(Error::Manifest(format!(
                "record {} tensor {} extends past the blob",
                entry.id, t.name
            )));
        }
        let slice = &bytes[start..end];
        let tensor = match t.kind {
            TensorKind::Real => Tensor::real(&t.shape, read_real(slice)),
            TensorKind::Complex => Tensor::complex(&t.shape, read_complex(slice)),
        }
        .map_err(|e| Error::Manifest(format!("record {} tensor {}: {e}", entry.id, t.name)))?;
        tensors.push((t.name.clone(), tensor));
    }
    Ok(TensorRecord {
        id: entry.id.clone(),
        seed: entry.seed,
        annotations: entry.annotations.clone(),
        tensors,
    })
}

/// Loads and verifies every record; returns nothing unless all records verify.
pub fn load_records(dir: &Path) -> Result<(RecordKind, Vec<TensorRecord>)> {
    let m = read_manifest(dir)?;
    let records = m
        .records
        .iter()
        .map(|e| decode(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((m.kind, records))
}

fn phantom_record(id: String, p: &Phantom) -> TensorRecord {
    let mask: Vec<f64> = p
        .background_mask
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    TensorRecord {
        id,
        seed: p.seed,
        annotations: p.annotations.clone(),
        tensors: vec![
            ("image".into(), p.image.to_tensor()),
            ("maps".into(), p.maps.to_tensor()),
            (
                "background_mask".into(),
                Tensor::real(&[p.height(), p.width()], mask).expect("sized"),
            ),
        ],
    }
}

fn record_phantom(r: TensorRecord) -> Result<Phantom> {
    let bad = |what: &str| Error::Manifest(format!("record {}: {what}", r.id));
    let image = ReconImage::from_tensor(r.tensor("image").ok_or_else(|| bad("missing image"))?)
        .map_err(|e| bad(&e.to_string()))?;
    let maps = SensitivityMaps::from_tensor(r.tensor("maps").ok_or_else(|| bad("missing maps"))?)
        .map_err(|e| bad(&e.to_string()))?;
    let mask = r
        .tensor("background_mask")
        .and_then(|t| t.as_real())
        .ok_or_else(|| bad("missing background_mask"))?;
    if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(bad("background_mask is not binary"));
    }
    let p = Phantom {
        image,
        maps,
        annotations: r.annotations.clone(),
        background_mask: mask.iter().map(|&v| v == 1.0).collect(),
        seed: r.seed,
    };
    p.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(p)
}

/// Record id used for the `i`-th phantom of a dataset.
pub fn phantom_id(i: usize) -> String {
    format!("p{i:05}")
}

pub fn save_dataset(dir: &Path, phantoms: &[Phantom]) -> Result<DatasetManifest> {
    let records: Vec<_> = phantoms
        .iter()
        .enumerate()
        .map(|(i, p)| phantom_record(phantom_id(i), p))
        .collect();
    save_records(dir, RecordKind::Phantom, &records)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Phantom>> {
    let (kind, records) = load_records(dir)?;
    if kind != RecordKind::Phantom {
        return Err(Error::Manifest(format!(
            "{} holds {kind:?} records, not phantoms",
            dir.display()
        )));
    }
    records.into_iter().map(record_phantom).collect()
}
