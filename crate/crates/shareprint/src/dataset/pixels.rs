//! Patch pixel loading: decode each source media once and slice out every
//! manifest patch that refers to it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use image::RgbImage;
use ndarray::Array3;
use rayon::prelude::*;

use crate::media::GsvVideo;

use super::manifest::{Manifest, ManifestRecord};
use super::patches::PATCH_SIZE;
use super::split::Split;
use super::{DatasetError, MediaKind};

/// A patch with decoded pixels and its class index in the manifest's
/// label order.
#[derive(Debug, Clone)]
pub struct LoadedPatch {
    pub record: ManifestRecord,
    pub class_index: usize,
    /// H x W x 3 interleaved, 8-bit.
    pub pixels: Array3<u8>,
}

fn slice_patch(img: &RgbImage, grid_row: u32, grid_col: u32) -> Array3<u8> {
    let y0 = grid_row as usize * PATCH_SIZE;
    let x0 = grid_col as usize * PATCH_SIZE;
    Array3::from_shape_fn((PATCH_SIZE, PATCH_SIZE, 3), |(y, x, c)| {
        img.get_pixel((x0 + x) as u32, (y0 + y) as u32)[c]
    })
}

fn load_for_source(
    path: &PathBuf,
    kind: MediaKind,
    records: Vec<(usize, ManifestRecord)>,
) -> Result<Vec<(usize, Array3<u8>)>, DatasetError> {
    let mut out = Vec::with_capacity(records.len());
    match kind {
        MediaKind::Image => {
            let img = image::open(path)
                .map_err(|e| DatasetError::BadMedia {
                    path: path.clone(),
                    reason: e.to_string(),
                })?
                .to_rgb8();
            for (idx, record) in records {
                out.push((idx, slice_patch(&img, record.grid_row, record.grid_col)));
            }
        }
        MediaKind::Video => {
            let video = GsvVideo::read_from(path).map_err(|e| DatasetError::BadMedia {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            for (idx, record) in records {
                let frame_index = record.frame_index.ok_or_else(|| DatasetError::BadMedia {
                    path: path.clone(),
                    reason: "video patch missing frame_index".into(),
                })? as usize;
                let frame = video.frames.get(frame_index).ok_or_else(|| {
                    DatasetError::BadMedia {
                        path: path.clone(),
                        reason: format!("frame {frame_index} out of range"),
                    }
                })?;
                let img = RgbImage::from_raw(video.width, video.height, frame.rgb.clone())
                    .expect("frame buffer consistent");
                out.push((idx, slice_patch(&img, record.grid_row, record.grid_col)));
            }
        }
    }
    Ok(out)
}

/// Decode the pixels for every patch of one kind and split. Sources are
/// decoded once each, in parallel; the returned order matches the
/// manifest record order.
pub fn load_split_pixels(
    manifest: &Manifest,
    kind: MediaKind,
    split: Split,
) -> Result<Vec<LoadedPatch>, DatasetError> {
    let selected: Vec<(usize, ManifestRecord)> = manifest
        .records
        .iter()
        .filter(|r| r.kind == kind && r.split == split)
        .cloned()
        .enumerate()
        .collect();
    let mut by_source: BTreeMap<PathBuf, Vec<(usize, ManifestRecord)>> = BTreeMap::new();
    for (idx, record) in selected.iter().cloned() {
        by_source
            .entry(record.source_path.clone())
            .or_default()
            .push((idx, record));
    }
    let groups: Vec<(PathBuf, Vec<(usize, ManifestRecord)>)> = by_source.into_iter().collect();
    let decoded: Vec<Result<Vec<(usize, Array3<u8>)>, DatasetError>> = groups
        .into_par_iter()
        .map(|(path, records)| load_for_source(&path, kind, records))
        .collect();
    let mut pixels: Vec<Option<Array3<u8>>> = vec![None; selected.len()];
    for group in decoded {
        for (idx, array) in group? {
            pixels[idx] = Some(array);
        }
    }
    let mut out = Vec::with_capacity(selected.len());
    for ((_, record), px) in selected.into_iter().zip(pixels) {
        let class_index =
            manifest
                .class_index(kind, &record.label)
                .ok_or_else(|| DatasetError::BadManifest {
                    path: PathBuf::new(),
                    reason: format!("label {} missing from manifest classes", record.label),
                })?;
        out.push(LoadedPatch {
            record,
            class_index,
            pixels: px.expect("every selected record decoded"),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::scan::LabelRules;
    use crate::dataset::split::SplitSpec;
    use crate::dataset::{ingest, IngestOptions};

    #[test]
    fn loads_patches_with_correct_pixels() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["A", "B", "NAT"] {
            let class_dir = dir.path().join("images").join(class);
            std::fs::create_dir_all(&class_dir).unwrap();
            for i in 0..3u8 {
                // left half one value, right half another: two patches
                let img = RgbImage::from_fn(512, 256, |x, _| {
                    image::Rgb([if x < 256 { i } else { i + 100 }, 0, 0])
                });
                img.save(class_dir.join(format!("i{i}.png"))).unwrap();
            }
        }
        let rules = LabelRules::for_classes(&["A".into(), "B".into(), "NAT".into()]);
        let manifest = ingest(
            dir.path(),
            &rules,
            &IngestOptions {
                split: SplitSpec::new(0.4, 0.3, 0.3, 7).unwrap(),
                max_patches_per_media: None,
            },
        )
        .unwrap();
        let train = load_split_pixels(&manifest, MediaKind::Image, Split::Train).unwrap();
        assert!(!train.is_empty());
        for patch in &train {
            let stem: u8 = patch
                .record
                .media_id
                .chars()
                .rev()
                .nth(4)
                .unwrap()
                .to_digit(10)
                .unwrap() as u8;
            let expected = if patch.record.grid_col == 0 {
                stem
            } else {
                stem + 100
            };
            assert_eq!(patch.pixels[[0, 0, 0]], expected);
            assert_eq!(patch.pixels.dim(), (256, 256, 3));
        }
    }
}
