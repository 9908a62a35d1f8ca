//! Media containers: lossless image helpers and the GSV raw video format.

mod gsv;

pub use gsv::{GsvFrame, GsvVideo, GSV_MAGIC};

use std::path::Path;

/// Extensions recognized as images (lossless and JPEG sources).
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];
/// Extensions recognized as videos. GSV is the native simulator output;
/// MPEG-family containers require an external decoder and are rejected
/// with an actionable error when none is available.
pub const VIDEO_EXTENSIONS: &[&str] = &["gsv", "mp4", "mpg", "mpeg", "mov", "avi"];

pub fn extension_of(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn is_image_path(path: &Path) -> bool {
    extension_of(path).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
}

pub fn is_video_path(path: &Path) -> bool {
    extension_of(path).is_some_and(|e| VIDEO_EXTENSIONS.contains(&e.as_str()))
}
