//! Non-overlapping patch cropping and channel transforms.

use image::RgbImage;
use ndarray::{Array2, Array3};

use super::{FrameRef, PatchRecord, Split};

/// Fixed patch geometry: patches are PATCH_SIZE x PATCH_SIZE RGB.
pub const PATCH_SIZE: usize = 256;

/// Provenance shared by every patch cropped from one frame.
#[derive(Debug, Clone)]
pub struct PatchContext {
    pub media_id: String,
    pub frame_ref: Option<FrameRef>,
    pub label: String,
    pub split: Split,
}

/// Number of patch rows and columns a frame yields: floor in both axes,
/// remainder pixels at the right and bottom discarded.
pub fn patch_grid(frame_height: usize, frame_width: usize, size: usize) -> (usize, usize) {
    (frame_height / size, frame_width / size)
}

/// Crop a frame into non-overlapping patches anchored at pixel (0, 0).
/// Frames smaller than the patch in either dimension yield no patches.
pub fn crop_patches(frame: &RgbImage, ctx: &PatchContext) -> Vec<PatchRecord> {
    let (rows, cols) = patch_grid(frame.height() as usize, frame.width() as usize, PATCH_SIZE);
    if rows == 0 || cols == 0 {
        log::warn!(
            "frame {}x{} of {} is smaller than {}px; no patches",
            frame.width(),
            frame.height(),
            ctx.media_id,
            PATCH_SIZE
        );
        return Vec::new();
    }
    let mut out = Vec::with_capacity(rows * cols);
    for gr in 0..rows {
        for gc in 0..cols {
            let y0 = gr * PATCH_SIZE;
            let x0 = gc * PATCH_SIZE;
            let mut pixels = Array3::<u8>::zeros((PATCH_SIZE, PATCH_SIZE, 3));
            for y in 0..PATCH_SIZE {
                for x in 0..PATCH_SIZE {
                    let p = frame.get_pixel((x0 + x) as u32, (y0 + y) as u32);
                    pixels[[y, x, 0]] = p[0];
                    pixels[[y, x, 1]] = p[1];
                    pixels[[y, x, 2]] = p[2];
                }
            }
            out.push(PatchRecord {
                media_id: ctx.media_id.clone(),
                frame_ref: ctx.frame_ref.clone(),
                grid_row: gr as u32,
                grid_col: gc as u32,
                pixels,
                label: ctx.label.clone(),
                split: ctx.split,
            });
        }
    }
    out
}

/// BT.601 luma conversion: Y = 0.299 R + 0.587 G + 0.114 B, rounded.
/// Optional ablation path; the classifiers train on RGB.
pub fn to_y_channel(pixels: &Array3<u8>) -> Array2<u8> {
    let (h, w, _) = pixels.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let r = pixels[[y, x, 0]] as f32;
        let g = pixels[[y, x, 1]] as f32;
        let b = pixels[[y, x, 2]] as f32;
        (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
    })
}
