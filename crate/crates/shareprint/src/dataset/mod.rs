//! Ingestion of labeled media into manifests of non-overlapping 256x256
//! RGB patches, with media-level train/val/test splits.

mod manifest;
mod patches;
mod pixels;
mod scan;
mod split;
mod video;

pub use manifest::{ingest, IngestOptions, Manifest, ManifestHeader, ManifestRecord};
pub use patches::{crop_patches, patch_grid, to_y_channel, PatchContext, PATCH_SIZE};
pub use pixels::load_split_pixels;
pub use scan::{scan_corpus, LabelRules};
pub use split::{assign_splits, Split, SplitSpec};
pub use video::extract_frames;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::sim::FrameKind;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no label rule matches {0}")]
    UnresolvableLabel(PathBuf),
    #[error("label {label} not in the {kind:?} label set {set:?}")]
    LabelNotInSet {
        label: String,
        kind: MediaKind,
        set: Vec<String>,
    },
    #[error("duplicate media id {0}")]
    DuplicateMediaId(String),
    #[error("class {class} has {count} media items; at least 3 are needed to populate the splits")]
    TooFewMedia { class: String, count: usize },
    #[error("split fractions {0:?} do not sum to 1")]
    BadSplitFractions([f64; 3]),
    #[error("cannot decode video {media_id}: {reason}")]
    UndecodableVideo { media_id: String, reason: String },
    #[error("video {media_id} has no frames")]
    EmptyVideo { media_id: String },
    #[error("{path}: {reason}")]
    BadMedia { path: PathBuf, reason: String },
    #[error("manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("B-frames cannot be referenced by patches")]
    BFrameRef,
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid label rules: {0}")]
    BadRules(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

/// One source media file with its provenance label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediaItem {
    pub id: String,
    pub kind: MediaKind,
    pub platform_label: String,
    pub source_path: PathBuf,
    pub device_id: Option<String>,
}

/// Reference to one I- or P-frame of a video. B-frames are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub media_id: String,
    pub frame_index: u32,
    pub frame_type: FrameKind,
}

impl FrameRef {
    pub fn new(media_id: String, frame_index: u32, frame_type: FrameKind) -> Result<Self, DatasetError> {
        if frame_type == FrameKind::B {
            return Err(DatasetError::BFrameRef);
        }
        Ok(FrameRef {
            media_id,
            frame_index,
            frame_type,
        })
    }
}

/// A materialized patch: pixels plus full provenance.
#[derive(Debug, Clone)]
pub struct PatchRecord {
    pub media_id: String,
    pub frame_ref: Option<FrameRef>,
    pub grid_row: u32,
    pub grid_col: u32,
    /// H x W x 3, 8-bit channels.
    pub pixels: ndarray::Array3<u8>,
    pub label: String,
    pub split: Split,
}
