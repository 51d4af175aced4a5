//! Skeleton sequences, synthetic domains, camera projection, corruptions and
//! the on-disk dataset format.

mod camera;
mod corrupt;
mod format;
mod generate;
pub mod joints;
mod sequence;

use thiserror::Error;

pub use camera::{map_coco17_to_ntu25, project_to_2d, rotate_view};
pub use corrupt::{drop_keypoints, jitter_joints, CorruptionSpec, DROP_LEVELS, JITTER_LEVELS};
pub use format::{read_dataset, sha256_hex, write_dataset, COORDS_FILE, FORMAT_TAG, LABELS_FILE, MANIFEST_FILE};
pub use generate::{
    generate_domain, ClassTemplate, DomainKind, DomainSpec, GroupMotion, SEMANTIC_AMPLITUDE, SEMANTIC_FREQUENCIES,
    SOURCE_FREQUENCIES, SOURCE_MAX_AMPLITUDE,
};
pub use sequence::{DatasetBundle, SkeletonSequence, SplitTag};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite coordinate at flat index {index}")]
    NonFinite { index: usize },
    #[error("sample {index} has label {label} but only {classes} classes")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed labels: {0}")]
    MalformedLabels(String),
    #[error("truncated payload: {bytes} bytes is not a multiple of the {record_bytes}-byte record")]
    TruncatedPayload { bytes: usize, record_bytes: usize },
    #[error("count mismatch: manifest says {manifest} samples, {file} holds {found}")]
    CountMismatch {
        manifest: usize,
        found: usize,
        file: &'static str,
    },
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("sample {sample} coordinate {index} is not representable as f32")]
    NotRepresentable { sample: usize, index: usize },
}
