//! Synthetic platform pipelines: resize, frame deletion, re-encode /
//! requantize, with a ground-truth chain record per output.

use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::media::GsvVideo;
use crate::sim::gop::{FrameKind, NoiseSpec};
use crate::sim::quant::{block_dct_double_quantize, QuantizerSpec};
use crate::sim::SimError;

/// One synthetic platform: what its upload path does to media.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    /// Spatial scale applied first; 1.0 leaves geometry untouched.
    pub resize_factor: f64,
    pub quantizer: QuantizerSpec,
    /// Frame indices removed from videos (after resize, before re-encode).
    #[serde(default)]
    pub frames_to_delete: Vec<usize>,
    /// Re-encode with a fresh GOP structure.
    #[serde(default)]
    pub regop: bool,
    /// GOP length used when `regop` is set.
    #[serde(default = "default_gop_length")]
    pub gop_length: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
}

fn default_gop_length() -> usize {
    12
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.resize_factor > 0.0) {
            return Err(SimError::BadPipeline {
                name: self.name.clone(),
                reason: format!("resize_factor must be > 0, got {}", self.resize_factor),
            });
        }
        if self.quantizer.s1 == 0 || self.quantizer.s2 == 0 {
            return Err(SimError::ZeroStep);
        }
        if self.regop && self.gop_length == 0 {
            return Err(SimError::BadPipeline {
                name: self.name.clone(),
                reason: "gop_length must be >= 1 when regop is set".into(),
            });
        }
        Ok(())
    }

    /// Identity pipeline: media passes through untouched.
    pub fn untouched(name: &str) -> Self {
        PipelineSpec {
            name: name.to_string(),
            resize_factor: 1.0,
            quantizer: QuantizerSpec { s1: 1, s2: 1 },
            frames_to_delete: Vec::new(),
            regop: false,
            gop_length: default_gop_length(),
            noise: NoiseSpec {
                sigma_shared: 0.0,
                sigma_indep: 0.0,
            },
        }
    }

    /// The two default synthetic platforms used for desk-scale fixtures:
    /// P_A = resize 0.5 + requantize(4), P_B = requantize(2) only.
    /// NAT is the absence of any pipeline.
    pub fn default_platforms() -> Vec<PipelineSpec> {
        vec![
            PipelineSpec {
                name: "P_A".into(),
                resize_factor: 0.5,
                quantizer: QuantizerSpec { s1: 1, s2: 4 },
                frames_to_delete: Vec::new(),
                regop: true,
                gop_length: default_gop_length(),
                noise: NoiseSpec::default(),
            },
            PipelineSpec {
                name: "P_B".into(),
                resize_factor: 1.0,
                quantizer: QuantizerSpec { s1: 1, s2: 2 },
                frames_to_delete: Vec::new(),
                regop: true,
                gop_length: default_gop_length(),
                noise: NoiseSpec::default(),
            },
        ]
    }

    fn is_identity_quantizer(&self) -> bool {
        self.quantizer.s1 == 1 && self.quantizer.s2 == 1
    }
}

/// Pipeline spec file: a list of `[[pipeline]]` tables.
#[derive(Debug, Deserialize)]
pub struct PipelineFile {
    pub pipeline: Vec<PipelineSpec>,
}

impl PipelineFile {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let file: PipelineFile = toml::from_str(&text).map_err(|e| SimError::BadPipeline {
            name: path.display().to_string(),
            reason: e.to_string(),
        })?;
        for spec in &file.pipeline {
            spec.validate()?;
        }
        Ok(file)
    }
}

/// Ground-truth record of everything a pipeline did to one media file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainRecord {
    pub pipeline: String,
    pub source: PathBuf,
    pub output: PathBuf,
    pub operations: Vec<String>,
    pub seed: u64,
    pub spec: PipelineSpec,
}

impl ChainRecord {
    /// Sidecar path: `<output>.chain.json`.
    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".chain.json");
        output.with_file_name(name)
    }

    pub fn write_sidecar(&self) -> Result<(), SimError> {
        let path = Self::sidecar_path(&self.output);
        let json = serde_json::to_string_pretty(self).expect("chain record serializes");
        std::fs::write(&path, json).map_err(|e| SimError::Io { path, source: e })
    }
}

fn resize_rgb(img: &RgbImage, factor: f64) -> RgbImage {
    if (factor - 1.0).abs() < f64::EPSILON {
        return img.clone();
    }
    let w = ((img.width() as f64 * factor).round() as u32).max(1);
    let h = ((img.height() as f64 * factor).round() as u32).max(1);
    image::imageops::resize(img, w, h, image::imageops::FilterType::Triangle)
}

fn channel_plane(rgb: &[u8], w: usize, h: usize, c: usize) -> Array2<f32> {
    Array2::from_shape_fn((h, w), |(y, x)| rgb[(y * w + x) * 3 + c] as f32)
}

fn store_plane(rgb: &mut [u8], plane: &Array2<f32>, c: usize) {
    let (h, w) = plane.dim();
    for y in 0..h {
        for x in 0..w {
            rgb[(y * w + x) * 3 + c] = plane[[y, x]].round().clamp(0.0, 255.0) as u8;
        }
    }
}

fn dq_rgb_in_place(rgb: &mut [u8], w: usize, h: usize, q: QuantizerSpec) -> Result<(), SimError> {
    for c in 0..3 {
        let mut plane = channel_plane(rgb, w, h, c);
        block_dct_double_quantize(&mut plane, q)?;
        store_plane(rgb, &plane, c);
    }
    Ok(())
}

fn check_geometry(spec: &PipelineSpec, w: usize, h: usize) -> Result<(), SimError> {
    if w < 256 || h < 256 {
        return Err(SimError::FrameTooSmall {
            name: spec.name.clone(),
            width: w,
            height: h,
        });
    }
    Ok(())
}

/// Run an image through a pipeline. Frame operations do not apply.
pub fn apply_pipeline_image(
    img: &RgbImage,
    spec: &PipelineSpec,
    source: &Path,
    output: &Path,
    seed: u64,
) -> Result<(RgbImage, ChainRecord), SimError> {
    spec.validate()?;
    let mut ops = Vec::new();
    let mut out = resize_rgb(img, spec.resize_factor);
    if (spec.resize_factor - 1.0).abs() > f64::EPSILON {
        ops.push(format!("resize factor={}", spec.resize_factor));
    }
    check_geometry(spec, out.width() as usize, out.height() as usize)?;
    if !spec.is_identity_quantizer() {
        let (w, h) = (out.width() as usize, out.height() as usize);
        let mut rgb = out.into_raw();
        dq_rgb_in_place(&mut rgb, w, h, spec.quantizer)?;
        ops.push(format!(
            "requantize s1={} s2={}",
            spec.quantizer.s1, spec.quantizer.s2
        ));
        out = RgbImage::from_raw(w as u32, h as u32, rgb).expect("raw buffer fits");
    }
    Ok((
        out,
        ChainRecord {
            pipeline: spec.name.clone(),
            source: source.to_path_buf(),
            output: output.to_path_buf(),
            operations: ops,
            seed,
            spec: spec.clone(),
        },
    ))
}

/// Run a video through a pipeline: resize, frame deletion, then
/// re-encode (fresh GOP typing, I-frame requantization, new within-GOP
/// noise) in that order.
pub fn apply_pipeline_video(
    video: &GsvVideo,
    spec: &PipelineSpec,
    source: &Path,
    output: &Path,
    seed: u64,
) -> Result<(GsvVideo, ChainRecord), SimError> {
    spec.validate()?;
    let mut ops = Vec::new();

    // resize each frame
    let mut frames: Vec<(FrameKind, RgbImage)> = video
        .frames
        .iter()
        .map(|f| {
            let img = RgbImage::from_raw(video.width, video.height, f.rgb.clone())
                .expect("frame buffer consistent");
            (f.kind, resize_rgb(&img, spec.resize_factor))
        })
        .collect();
    if (spec.resize_factor - 1.0).abs() > f64::EPSILON {
        ops.push(format!("resize factor={}", spec.resize_factor));
    }
    if frames.is_empty() {
        return Err(SimError::EmptyInput("video with no frames"));
    }
    let (w, h) = (
        frames[0].1.width() as usize,
        frames[0].1.height() as usize,
    );
    check_geometry(spec, w, h)?;

    // delete frames
    if !spec.frames_to_delete.is_empty() {
        let len = frames.len();
        for &i in &spec.frames_to_delete {
            if i >= len {
                return Err(SimError::BadFrameIndex { index: i, len });
            }
        }
        if spec.frames_to_delete.len() >= len {
            return Err(SimError::DeleteAll(len));
        }
        let mut drop = vec![false; len];
        for &i in &spec.frames_to_delete {
            drop[i] = true;
        }
        frames = frames
            .into_iter()
            .zip(drop)
            .filter(|(_, d)| !*d)
            .map(|(f, _)| f)
            .collect();
        ops.push(format!("delete frames={:?}", spec.frames_to_delete));
    }

    // re-encode / requantize
    let reencoding = spec.regop || !spec.is_identity_quantizer();
    let gop_length = if spec.regop {
        spec.gop_length
    } else {
        video.gop_length as usize
    }
    .max(1);
    let mut out = GsvVideo::new(w as u32, h as u32, gop_length as u32);
    if reencoding {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut shared = Array2::<f32>::zeros((h, w));
        for (i, (_, img)) in frames.iter().enumerate() {
            let kind = if i % gop_length == 0 {
                FrameKind::I
            } else {
                FrameKind::P
            };
            let mut rgb = img.as_raw().clone();
            if kind == FrameKind::I {
                shared = noise_field(h, w, spec.noise.sigma_shared, &mut rng);
                if !spec.is_identity_quantizer() {
                    dq_rgb_in_place(&mut rgb, w, h, spec.quantizer)?;
                }
            }
            let indep = noise_field(h, w, spec.noise.sigma_indep, &mut rng);
            for y in 0..h {
                for x in 0..w {
                    let n = shared[[y, x]] + indep[[y, x]];
                    for c in 0..3 {
                        let idx = (y * w + x) * 3 + c;
                        rgb[idx] = (rgb[idx] as f32 + n).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
            out.push_frame(kind, rgb);
        }
        ops.push(format!(
            "reencode gop={} s1={} s2={}",
            gop_length, spec.quantizer.s1, spec.quantizer.s2
        ));
    } else {
        for (kind, img) in frames {
            out.push_frame(kind, img.into_raw());
        }
    }

    Ok((
        out,
        ChainRecord {
            pipeline: spec.name.clone(),
            source: source.to_path_buf(),
            output: output.to_path_buf(),
            operations: ops,
            seed,
            spec: spec.clone(),
        },
    ))
}

fn noise_field(h: usize, w: usize, sigma: f32, rng: &mut ChaCha12Rng) -> Array2<f32> {
    if sigma <= 0.0 {
        return Array2::zeros((h, w));
    }
    let normal = Normal::new(0.0f32, sigma).expect("valid sigma");
    Array2::from_shape_fn((h, w), |_| normal.sample(rng))
}
