//! The patch manifest: a versioned header line followed by one JSON
//! record per patch. Pixels are not stored; they are re-read lazily from
//! the source media.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::FrameKind;

use super::patches::{patch_grid, PATCH_SIZE};
use super::scan::{scan_corpus, LabelRules};
use super::split::{assign_splits, Split, SplitSpec};
use super::video::extract_frames;
use super::{DatasetError, MediaItem, MediaKind};

pub const MANIFEST_FORMAT: &str = "shareprint-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub patch_size: u32,
    pub split: SplitSpec,
    /// Class label order per media kind; fixes class indices for training.
    pub classes: BTreeMap<String, Vec<String>>,
}

/// One patch descriptor. `frame_index`/`frame_type` are absent for images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub media_id: String,
    pub kind: MediaKind,
    pub label: String,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_index: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_type: Option<FrameKind>,
    pub grid_row: u32,
    pub grid_col: u32,
    pub source_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub split: SplitSpec,
    /// Cap on patches kept per media item, row-major across frames.
    pub max_patches_per_media: Option<usize>,
}

impl Manifest {
    pub fn write_to(&self, path: &Path) -> Result<(), DatasetError> {
        let io = |e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_string(&self.header).expect("header serializes");
        writeln!(w, "{header}").map_err(io)?;
        for record in &self.records {
            let line = serde_json::to_string(record).expect("record serializes");
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_from(path: &Path) -> Result<Manifest, DatasetError> {
        let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut lines = BufReader::new(file).lines();
        let bad = |reason: String| DatasetError::BadManifest {
            path: path.to_path_buf(),
            reason,
        };
        let header_line = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let header: ManifestHeader =
            serde_json::from_str(&header_line).map_err(|e| bad(format!("bad header: {e}")))?;
        if header.format != MANIFEST_FORMAT {
            return Err(bad(format!("unknown format {}", header.format)));
        }
        if header.version != MANIFEST_VERSION {
            return Err(bad(format!(
                "manifest version {} unsupported (expected {})",
                header.version, MANIFEST_VERSION
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| bad(format!("record {}: {e}", i + 2)))?;
            records.push(record);
        }
        Ok(Manifest { header, records })
    }

    /// Class label order for a media kind, as fixed at ingest time.
    pub fn classes(&self, kind: MediaKind) -> &[String] {
        let key = match kind {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        };
        self.header
            .classes
            .get(key)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn class_index(&self, kind: MediaKind, label: &str) -> Option<usize> {
        self.classes(kind).iter().position(|l| l == label)
    }

    pub fn select(&self, kind: MediaKind, split: Split) -> Vec<&ManifestRecord> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && r.split == split)
            .collect()
    }

    /// Keep only I-frame video patches (image records pass through).
    pub fn restrict_to_i_frames(&self) -> Manifest {
        let records = self
            .records
            .iter()
            .filter(|r| r.kind == MediaKind::Image || r.frame_type == Some(FrameKind::I))
            .cloned()
            .collect();
        Manifest {
            header: self.header.clone(),
            records,
        }
    }

    /// SHA-256 of the serialized manifest, for provenance records.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.header).expect("header serializes"));
        for record in &self.records {
            hasher.update(serde_json::to_vec(record).expect("record serializes"));
            hasher.update(b"\n");
        }
        format!("{:x}", hasher.finalize())
    }
}

fn image_dimensions(path: &Path) -> Result<(usize, usize), DatasetError> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?
        .with_guessed_format()
        .map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    let (w, h) = reader.into_dimensions().map_err(|e| DatasetError::BadMedia {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

fn records_for_media(
    item: &MediaItem,
    split: Split,
    cap: Option<usize>,
) -> Result<Vec<ManifestRecord>, DatasetError> {
    let mut out = Vec::new();
    match item.kind {
        MediaKind::Image => {
            let (h, w) = image_dimensions(&item.source_path)?;
            let (rows, cols) = patch_grid(h, w, PATCH_SIZE);
            if rows == 0 || cols == 0 {
                log::warn!(
                    "image {} is {}x{}, smaller than {}px; skipped",
                    item.id,
                    w,
                    h,
                    PATCH_SIZE
                );
            }
            for gr in 0..rows {
                for gc in 0..cols {
                    out.push(ManifestRecord {
                        media_id: item.id.clone(),
                        kind: item.kind,
                        label: item.platform_label.clone(),
                        split,
                        frame_index: None,
                        frame_type: None,
                        grid_row: gr as u32,
                        grid_col: gc as u32,
                        source_path: item.source_path.clone(),
                    });
                }
            }
        }
        MediaKind::Video => {
            for (frame_ref, frame) in extract_frames(item)? {
                let (rows, cols) =
                    patch_grid(frame.height() as usize, frame.width() as usize, PATCH_SIZE);
                for gr in 0..rows {
                    for gc in 0..cols {
                        out.push(ManifestRecord {
                            media_id: item.id.clone(),
                            kind: item.kind,
                            label: item.platform_label.clone(),
                            split,
                            frame_index: Some(frame_ref.frame_index),
                            frame_type: Some(frame_ref.frame_type),
                            grid_row: gr as u32,
                            grid_col: gc as u32,
                            source_path: item.source_path.clone(),
                        });
                    }
                }
            }
        }
    }
    if let Some(cap) = cap {
        out.truncate(cap);
    }
    Ok(out)
}

/// Scan a corpus, assign media-level splits, and enumerate every patch of
/// every image and I/P-frame into a manifest.
pub fn ingest(
    root: &Path,
    rules: &LabelRules,
    opts: &IngestOptions,
) -> Result<Manifest, DatasetError> {
    let items = scan_corpus(root, rules)?;
    let splits = assign_splits(&items, &opts.split)?;

    let mut classes = BTreeMap::new();
    classes.insert("image".to_string(), rules.labels.image.clone());
    classes.insert("video".to_string(), rules.labels.video.clone());

    let results: Vec<Result<Vec<ManifestRecord>, DatasetError>> = items
        .par_iter()
        .map(|item| records_for_media(item, splits[&item.id], opts.max_patches_per_media))
        .collect();
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    // scan order is already deterministic; keep records grouped by media
    Ok(Manifest {
        header: ManifestHeader {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            patch_size: PATCH_SIZE as u32,
            split: opts.split,
            classes,
        },
        records,
    })
}
