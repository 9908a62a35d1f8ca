//! Desk-scale synthetic corpus: source images and videos pushed through a
//! set of platform pipelines, laid out so the ingest scanner can label
//! them by directory name.
//!
//! ```text
//! out/
//!   images/NAT/img_0000.png
//!   images/P_A/img_0000.png  (+ img_0000.png.chain.json)
//!   videos/NAT/vid_0000.gsv
//!   ...
//! ```

use std::path::Path;

use image::RgbImage;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::media::GsvVideo;
use crate::sim::gop::FrameKind;
use crate::sim::pipeline::{apply_pipeline_image, apply_pipeline_video, PipelineSpec};
use crate::sim::SimError;

/// Parameters for one synthetic corpus build.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub num_images: usize,
    pub image_size: (u32, u32),
    pub num_videos: usize,
    pub video_size: (u32, u32),
    pub frames_per_video: usize,
    pub video_gop_length: usize,
    /// Platform pipelines; the untouched NAT class is always emitted.
    pub pipelines: Vec<PipelineSpec>,
    pub seed: u64,
}

impl CorpusSpec {
    /// Defaults sized for CPU-only runs: three classes (NAT plus the two
    /// default platforms) over 512x512 sources.
    pub fn desk_default() -> Self {
        CorpusSpec {
            num_images: 210,
            image_size: (512, 512),
            num_videos: 36,
            video_size: (512, 512),
            frames_per_video: 6,
            video_gop_length: 3,
            pipelines: PipelineSpec::default_platforms(),
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusSummary {
    pub images_written: usize,
    pub videos_written: usize,
    pub classes: Vec<String>,
}

fn blur_pass(field: &mut Array2<f32>, radius: i64) {
    let (h, w) = field.dim();
    let src = field.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            let mut n = 0.0f32;
            for dy in -radius..=radius {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -radius..=radius {
                    let xx = x as i64 + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    acc += src[[yy as usize, xx as usize]];
                    n += 1.0;
                }
            }
            field[[y, x]] = acc / n;
        }
    }
}

/// Smooth scene plane in [0, 255]: low-frequency blobs plus mild texture.
fn scene_plane(w: usize, h: usize, rng: &mut ChaCha12Rng) -> Array2<f32> {
    // coarse structure on a small grid, upsampled bilinearly
    let gw = 17;
    let gh = 17;
    let grid = Array2::from_shape_fn((gh, gw), |_| rng.random_range(0.0f32..1.0));
    let mut plane = Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = y as f32 / (h - 1).max(1) as f32 * (gh - 1) as f32;
        let fx = x as f32 / (w - 1).max(1) as f32 * (gw - 1) as f32;
        let (y0, x0) = (fy as usize, fx as usize);
        let (y1, x1) = ((y0 + 1).min(gh - 1), (x0 + 1).min(gw - 1));
        let (ty, tx) = (fy - y0 as f32, fx - x0 as f32);
        let top = grid[[y0, x0]] * (1.0 - tx) + grid[[y0, x1]] * tx;
        let bot = grid[[y1, x0]] * (1.0 - tx) + grid[[y1, x1]] * tx;
        top * (1.0 - ty) + bot * ty
    });
    // texture: blurred white noise
    let mut texture = Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0f32..1.0));
    blur_pass(&mut texture, 1);
    for (p, t) in plane.iter_mut().zip(texture.iter()) {
        *p = (*p * 200.0 + 25.0 + t * 18.0).clamp(0.0, 255.0);
    }
    plane
}

fn synth_image(w: u32, h: u32, rng: &mut ChaCha12Rng) -> RgbImage {
    let luma = scene_plane(w as usize, h as usize, rng);
    let cr = rng.random_range(-24.0f32..24.0);
    let cb = rng.random_range(-24.0f32..24.0);
    RgbImage::from_fn(w, h, |x, y| {
        let l = luma[[y as usize, x as usize]];
        image::Rgb([
            (l + cr).clamp(0.0, 255.0) as u8,
            l.clamp(0.0, 255.0) as u8,
            (l + cb).clamp(0.0, 255.0) as u8,
        ])
    })
}

/// Native video: drifting scene with per-GOP correlated sensor noise
/// baked into the pixels, typed I at every GOP start and P elsewhere.
fn synth_video(spec: &CorpusSpec, rng: &mut ChaCha12Rng) -> GsvVideo {
    let (w, h) = (spec.video_size.0 as usize, spec.video_size.1 as usize);
    let drift = rng.random_range(1..4usize);
    let margin = spec.frames_per_video * drift + 8;
    let scene = scene_plane(w + margin, h, rng);
    let cr = rng.random_range(-24.0f32..24.0);
    let cb = rng.random_range(-24.0f32..24.0);
    let mut video = GsvVideo::new(spec.video_size.0, spec.video_size.1, spec.video_gop_length as u32);
    let mut shared = Array2::<f32>::zeros((h, w));
    for i in 0..spec.frames_per_video {
        let kind = if i % spec.video_gop_length == 0 {
            FrameKind::I
        } else {
            FrameKind::P
        };
        if kind == FrameKind::I {
            shared = Array2::from_shape_fn((h, w), |_| rng.random_range(-4.0f32..4.0));
        }
        let mut rgb = vec![0u8; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let l = scene[[y, x + i * drift]] + shared[[y, x]]
                    + rng.random_range(-0.5f32..0.5);
                let idx = (y * w + x) * 3;
                rgb[idx] = (l + cr).clamp(0.0, 255.0) as u8;
                rgb[idx + 1] = l.clamp(0.0, 255.0) as u8;
                rgb[idx + 2] = (l + cb).clamp(0.0, 255.0) as u8;
            }
        }
        video.push_frame(kind, rgb);
    }
    video
}

fn ensure_dir(path: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(path).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn save_png(img: &RgbImage, path: &Path) -> Result<(), SimError> {
    img.save(path).map_err(|e| SimError::Media {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Generate the full corpus under `out_dir`. Deterministic in
/// `spec.seed`; media generation and pipeline application parallelize per
/// source item.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusSummary, SimError> {
    for p in &spec.pipelines {
        p.validate()?;
    }
    let mut classes: Vec<String> = vec!["NAT".to_string()];
    classes.extend(spec.pipelines.iter().map(|p| p.name.clone()));
    for class in &classes {
        ensure_dir(&out_dir.join("images").join(class))?;
        ensure_dir(&out_dir.join("videos").join(class))?;
    }

    let image_results: Vec<Result<usize, SimError>> = (0..spec.num_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
            let source = synth_image(spec.image_size.0, spec.image_size.1, &mut rng);
            let name = format!("img_{i:04}.png");
            let nat_path = out_dir.join("images").join("NAT").join(&name);
            save_png(&source, &nat_path)?;
            let mut written = 1;
            for p in &spec.pipelines {
                let out_path = out_dir.join("images").join(&p.name).join(&name);
                let op_seed = spec.seed ^ (i as u64).wrapping_mul(0x9E37_79B9);
                let (shared, chain) =
                    apply_pipeline_image(&source, p, &nat_path, &out_path, op_seed)?;
                save_png(&shared, &out_path)?;
                chain.write_sidecar()?;
                written += 1;
            }
            Ok(written)
        })
        .collect();
    let mut images_written = 0;
    for r in image_results {
        images_written += r?;
    }

    let video_results: Vec<Result<usize, SimError>> = (0..spec.num_videos)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                ChaCha12Rng::seed_from_u64(spec.seed.wrapping_add(0x5EED).wrapping_add(i as u64));
            let source = synth_video(spec, &mut rng);
            let name = format!("vid_{i:04}.gsv");
            let nat_path = out_dir.join("videos").join("NAT").join(&name);
            source.write_to(&nat_path).map_err(|e| SimError::Io {
                path: nat_path.clone(),
                source: e,
            })?;
            let mut written = 1;
            for p in &spec.pipelines {
                let out_path = out_dir.join("videos").join(&p.name).join(&name);
                let op_seed = spec.seed ^ (i as u64).wrapping_mul(0xC2B2_AE35);
                let (shared, chain) =
                    apply_pipeline_video(&source, p, &nat_path, &out_path, op_seed)?;
                shared.write_to(&out_path).map_err(|e| SimError::Io {
                    path: out_path.clone(),
                    source: e,
                })?;
                chain.write_sidecar()?;
                written += 1;
            }
            Ok(written)
        })
        .collect();
    let mut videos_written = 0;
    for r in video_results {
        videos_written += r?;
    }

    Ok(CorpusSummary {
        images_written,
        videos_written,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_corpus_builds_three_class_tree() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            num_images: 2,
            image_size: (512, 512),
            num_videos: 1,
            video_size: (512, 512),
            frames_per_video: 4,
            video_gop_length: 2,
            pipelines: PipelineSpec::default_platforms(),
            seed: 1,
        };
        let summary = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(summary.images_written, 6);
        assert_eq!(summary.videos_written, 3);
        assert_eq!(summary.classes, vec!["NAT", "P_A", "P_B"]);
        for class in &summary.classes {
            assert!(dir.path().join("images").join(class).join("img_0000.png").exists());
            assert!(dir.path().join("videos").join(class).join("vid_0000.gsv").exists());
        }
        // pipeline outputs carry chain sidecars, native copies do not
        assert!(dir
            .path()
            .join("images/P_A/img_0000.png.chain.json")
            .exists());
        assert!(!dir
            .path()
            .join("images/NAT/img_0000.png.chain.json")
            .exists());
        // resize 0.5 halves P_A geometry
        let shared = image::open(dir.path().join("images/P_A/img_0000.png")).unwrap();
        assert_eq!(shared.width(), 256);
    }
}
