//! Synthetic phantoms and the on-disk dataset format.

pub(crate) mod blob;
mod format;
mod phantom;

pub use format::{
    load_dataset, load_records, phantom_id, read_manifest, save_dataset, save_records,
    DatasetManifest, RecordEntry, RecordKind, TensorEntry, TensorKind, TensorRecord, DTYPE,
    FORMAT_VERSION, SUPPORTED_MAJOR,
};
pub use phantom::{generate_phantom, AnnotationBox, Phantom, MIN_BOX_SIDE, REJECTION_SSIM};
