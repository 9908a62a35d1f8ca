//! Corpus scanning: walk a directory tree and resolve each media file to
//! a labeled [`MediaItem`] via a path-pattern rule table.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use crate::media::{is_image_path, is_video_path};

use super::{DatasetError, MediaItem, MediaKind};

/// Ordered path-pattern labeling rules plus the per-kind label sets.
///
/// A rule matches when its pattern occurs as a substring of the media
/// file's root-relative path (unix separators). First match wins.
#[derive(Debug, Clone, Deserialize)]
pub struct LabelRules {
    pub labels: LabelSets,
    #[serde(rename = "rule")]
    pub rules: Vec<LabelRule>,
    /// Take the text before the first `_` of the file stem as device id.
    #[serde(default)]
    pub device_prefix: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelSets {
    pub image: Vec<String>,
    pub video: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelRule {
    pub pattern: String,
    pub label: String,
}

impl LabelRules {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let rules: LabelRules =
            toml::from_str(&text).map_err(|e| DatasetError::BadRules(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.rules.is_empty() {
            return Err(DatasetError::BadRules("no rules declared".into()));
        }
        if self.labels.image.is_empty() || self.labels.video.is_empty() {
            return Err(DatasetError::BadRules("empty label set".into()));
        }
        Ok(())
    }

    /// Directory-name rules for a synthetic corpus where every class `C`
    /// lives under a `/C/` path component, for both media kinds.
    pub fn for_classes(classes: &[String]) -> Self {
        LabelRules {
            labels: LabelSets {
                image: classes.to_vec(),
                video: classes.to_vec(),
            },
            rules: classes
                .iter()
                .map(|c| LabelRule {
                    pattern: format!("/{c}/"),
                    label: c.clone(),
                })
                .collect(),
            device_prefix: false,
        }
    }

    fn label_for(&self, rel_path: &str) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| rel_path.contains(&r.pattern))
            .map(|r| r.label.as_str())
    }

    fn set_for(&self, kind: MediaKind) -> &[String] {
        match kind {
            MediaKind::Image => &self.labels.image,
            MediaKind::Video => &self.labels.video,
        }
    }
}

/// Walk `root` and return one [`MediaItem`] per readable media file, in
/// deterministic path order. Unreadable files are skipped with a warning;
/// a media file no rule can label is a hard error.
pub fn scan_corpus(root: &Path, rules: &LabelRules) -> Result<Vec<MediaItem>, DatasetError> {
    rules.validate()?;
    let mut items = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let walker = walkdir::WalkDir::new(root)
        .sort_by(|a, b| a.path().cmp(b.path()))
        .into_iter();
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let kind = if is_image_path(path) {
            MediaKind::Image
        } else if is_video_path(path) {
            MediaKind::Video
        } else {
            continue;
        };
        if std::fs::File::open(path).is_err() {
            log::warn!("skipping unreadable file {}", path.display());
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        // leading slash so "/CLASS/" patterns can match a top-level dir
        let rel = format!("/{rel}");
        let label = rules
            .label_for(&rel)
            .ok_or_else(|| DatasetError::UnresolvableLabel(path.to_path_buf()))?
            .to_string();
        let set = rules.set_for(kind);
        if !set.iter().any(|l| l == &label) {
            return Err(DatasetError::LabelNotInSet {
                label,
                kind,
                set: set.to_vec(),
            });
        }
        let id = rel.trim_start_matches('/').to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateMediaId(id));
        }
        let device_id = if rules.device_prefix {
            path.file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.split('_').next())
                .map(|s| s.to_string())
        } else {
            None
        };
        items.push(MediaItem {
            id,
            kind,
            platform_label: label,
            source_path: path.to_path_buf(),
            device_id,
        });
    }
    Ok(items)
}
