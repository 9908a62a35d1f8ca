//! Frame extraction: decode a video and keep its I- and P-frames.

use image::RgbImage;

use crate::media::{extension_of, GsvVideo};
use crate::sim::FrameKind;

use super::{DatasetError, FrameRef, MediaItem, MediaKind};

/// Decode `video` and return its I- and P-frames with their original
/// indices. B-frames are dropped; indices are not renumbered.
pub fn extract_frames(video: &MediaItem) -> Result<Vec<(FrameRef, RgbImage)>, DatasetError> {
    if video.kind != MediaKind::Video {
        return Err(DatasetError::UndecodableVideo {
            media_id: video.id.clone(),
            reason: "not a video".into(),
        });
    }
    let ext = extension_of(&video.source_path).unwrap_or_default();
    if ext != "gsv" {
        // MPEG-family containers need an external decoder, which this
        // build does not ship; see README for the conversion path.
        return Err(DatasetError::UndecodableVideo {
            media_id: video.id.clone(),
            reason: format!(
                "container .{ext} is not supported without an external decoder; \
                 convert to .gsv first"
            ),
        });
    }
    let gsv = GsvVideo::read_from(&video.source_path).map_err(|e| DatasetError::UndecodableVideo {
        media_id: video.id.clone(),
        reason: e.to_string(),
    })?;
    if gsv.frames.is_empty() {
        return Err(DatasetError::EmptyVideo {
            media_id: video.id.clone(),
        });
    }
    let mut out = Vec::new();
    for (index, frame) in gsv.frames.iter().enumerate() {
        if frame.kind == FrameKind::B {
            continue;
        }
        let img = RgbImage::from_raw(gsv.width, gsv.height, frame.rgb.clone()).ok_or_else(|| {
            DatasetError::UndecodableVideo {
                media_id: video.id.clone(),
                reason: "frame buffer size mismatch".into(),
            }
        })?;
        out.push((
            FrameRef::new(video.id.clone(), index as u32, frame.kind)?,
            img,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn write_gsv(path: &Path, pattern: &str) {
        let mut video = GsvVideo::new(8, 8, 4);
        for c in pattern.chars() {
            video.push_frame(FrameKind::from_char(c).unwrap(), vec![7u8; 8 * 8 * 3]);
        }
        video.write_to(path).unwrap();
    }

    fn item(path: &Path) -> MediaItem {
        MediaItem {
            id: "vid".into(),
            kind: MediaKind::Video,
            platform_label: "NAT".into(),
            source_path: path.to_path_buf(),
            device_id: None,
        }
    }

    #[test]
    fn b_frames_are_dropped_with_indices_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.gsv");
        write_gsv(&path, "IPPBP");
        let frames = extract_frames(&item(&path)).unwrap();
        assert_eq!(frames.len(), 4);
        let indices: Vec<u32> = frames.iter().map(|(r, _)| r.frame_index).collect();
        assert_eq!(indices, vec![0, 1, 2, 4]);
        assert!(frames.iter().all(|(r, _)| r.frame_type != FrameKind::B));
    }

    #[test]
    fn strictly_increasing_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.gsv");
        write_gsv(&path, "IBBPBBPBBPI");
        let frames = extract_frames(&item(&path)).unwrap();
        let indices: Vec<u32> = frames.iter().map(|(r, _)| r.frame_index).collect();
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(frames.len(), 5); // I P P P I
    }

    #[test]
    fn zero_frame_stream_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.gsv");
        write_gsv(&path, "");
        assert!(matches!(
            extract_frames(&item(&path)),
            Err(DatasetError::EmptyVideo { .. })
        ));
    }

    #[test]
    fn unsupported_container_error_names_media() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mp4");
        std::fs::write(&path, b"not a real mp4").unwrap();
        match extract_frames(&item(&path)) {
            Err(DatasetError::UndecodableVideo { media_id, .. }) => assert_eq!(media_id, "vid"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
