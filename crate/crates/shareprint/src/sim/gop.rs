//! GOP sequences: synthetic generation, frame deletion, and re-encoding
//! with within-GOP correlated noise.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::quant::{block_dct_double_quantize, QuantizerSpec};
use super::SimError;

/// Frame coding type. B-frames can appear in inputs but are never
/// synthesized by [`GopSequence::reencode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    I,
    P,
    B,
}

impl FrameKind {
    pub fn as_char(self) -> char {
        match self {
            FrameKind::I => 'I',
            FrameKind::P => 'P',
            FrameKind::B => 'B',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(FrameKind::I),
            'P' => Some(FrameKind::P),
            'B' => Some(FrameKind::B),
            _ => None,
        }
    }
}

/// One frame: scene content plus the additive noise the encoder left on it.
/// The observable pixel plane is `content + noise`.
#[derive(Debug, Clone)]
pub struct GopFrame {
    pub kind: FrameKind,
    pub content: Array2<f32>,
    pub noise: Array2<f32>,
}

impl GopFrame {
    pub fn pixels(&self) -> Array2<f32> {
        &self.content + &self.noise
    }
}

/// Noise model: one Gaussian field shared by every frame of a GOP plus a
/// small independent Gaussian per frame, giving within-GOP correlation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_shared: f32,
    pub sigma_indep: f32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_shared: 2.0,
            sigma_indep: 0.25,
        }
    }
}

/// Parameters for generating a synthetic encoded sequence.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub height: usize,
    pub width: usize,
    /// Frame typing, e.g. "IPPPPI" or "IBBPBBPBBPI".
    pub pattern: String,
    pub gop_length: usize,
    pub noise: NoiseSpec,
    /// Per-frame horizontal drift of the scene, in pixels.
    pub drift: f32,
}

impl SequenceSpec {
    pub fn new(height: usize, width: usize, pattern: &str, gop_length: usize) -> Self {
        SequenceSpec {
            height,
            width,
            pattern: pattern.to_string(),
            gop_length,
            noise: NoiseSpec::default(),
            drift: 0.0,
        }
    }
}

/// An ordered run of typed frames. The first frame is always an I-frame.
#[derive(Debug, Clone)]
pub struct GopSequence {
    pub frames: Vec<GopFrame>,
    pub gop_length: usize,
}

fn smooth_field(h: usize, w: usize, rng: &mut ChaCha12Rng, scale: f32) -> Array2<f32> {
    // Band-limited random field: white noise box-blurred twice.
    let normal = Normal::new(0.0f32, 1.0).expect("valid sigma");
    let mut field = Array2::from_shape_fn((h, w), |_| normal.sample(rng));
    for _ in 0..2 {
        let src = field.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                let mut n = 0.0f32;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let yy = y as i64 + dy;
                        let xx = x as i64 + dx;
                        if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                            acc += src[[yy as usize, xx as usize]];
                            n += 1.0;
                        }
                    }
                }
                field[[y, x]] = acc / n;
            }
        }
    }
    let max = field.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6);
    field.mapv_inplace(|v| v / max * scale);
    field
}

fn gaussian_field(h: usize, w: usize, sigma: f32, rng: &mut ChaCha12Rng) -> Array2<f32> {
    if sigma <= 0.0 {
        return Array2::zeros((h, w));
    }
    let normal = Normal::new(0.0f32, sigma).expect("valid sigma");
    Array2::from_shape_fn((h, w), |_| normal.sample(rng))
}

impl GopSequence {
    /// Generate a synthetic sequence: a smooth scene (optionally drifting
    /// horizontally frame to frame) with per-GOP correlated noise. GOP
    /// membership for the noise follows `spec.pattern`'s I-frames.
    pub fn synthesize(spec: &SequenceSpec, seed: u64) -> Result<Self, SimError> {
        if spec.pattern.is_empty() {
            return Err(SimError::EmptyInput("sequence pattern"));
        }
        let kinds: Vec<FrameKind> = spec
            .pattern
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| FrameKind::from_char(c).ok_or(SimError::EmptyInput("bad pattern char")))
            .collect::<Result<_, _>>()?;
        if kinds.is_empty() {
            return Err(SimError::EmptyInput("sequence pattern"));
        }
        if kinds[0] != FrameKind::I {
            return Err(SimError::BadPipeline {
                name: "sequence".into(),
                reason: "pattern must start with an I-frame".into(),
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let scene = smooth_field(spec.height, spec.width + kinds.len() * 2 + 16, &mut rng, 100.0);
        let mut frames = Vec::with_capacity(kinds.len());
        let mut shared = gaussian_field(spec.height, spec.width, spec.noise.sigma_shared, &mut rng);
        for (i, &kind) in kinds.iter().enumerate() {
            if kind == FrameKind::I && i > 0 {
                shared = gaussian_field(spec.height, spec.width, spec.noise.sigma_shared, &mut rng);
            }
            let offset = (i as f32 * spec.drift) as usize;
            let content = Array2::from_shape_fn((spec.height, spec.width), |(y, x)| {
                128.0 + scene[[y, x + offset]]
            });
            let indep = gaussian_field(spec.height, spec.width, spec.noise.sigma_indep, &mut rng);
            frames.push(GopFrame {
                kind,
                content,
                noise: &shared + &indep,
            });
        }
        Ok(GopSequence {
            frames,
            gop_length: spec.gop_length,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn pattern(&self) -> String {
        self.frames.iter().map(|f| f.kind.as_char()).collect()
    }

    /// Remove the frames at `indices`. Remaining frames keep their pixel
    /// content and coding type; later frames shift left, crossing GOP
    /// boundaries where the deletion straddles them.
    pub fn delete_frames(&self, indices: &[usize]) -> Result<GopSequence, SimError> {
        let len = self.frames.len();
        for &i in indices {
            if i >= len {
                return Err(SimError::BadFrameIndex { index: i, len });
            }
        }
        let mut drop = vec![false; len];
        for &i in indices {
            drop[i] = true;
        }
        let frames: Vec<GopFrame> = self
            .frames
            .iter()
            .zip(&drop)
            .filter(|(_, &d)| !d)
            .map(|(f, _)| f.clone())
            .collect();
        if frames.is_empty() {
            return Err(SimError::DeleteAll(len));
        }
        Ok(GopSequence {
            frames,
            gop_length: self.gop_length,
        })
    }

    /// Re-encode with a fresh GOP structure: frame types become I at every
    /// `gop_length` boundary and P elsewhere, new within-GOP correlated
    /// noise replaces the old noise term, and I-frame content passes
    /// through block-DCT double quantization.
    pub fn reencode(
        &self,
        gop_length: usize,
        quantizer: QuantizerSpec,
        noise: NoiseSpec,
        seed: u64,
    ) -> Result<GopSequence, SimError> {
        if self.frames.is_empty() {
            return Err(SimError::EmptyInput("reencode sequence"));
        }
        let gop_length = gop_length.max(1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (h, w) = self.frames[0].content.dim();
        let mut out = Vec::with_capacity(self.frames.len());
        let mut shared = Array2::zeros((0, 0));
        for (i, frame) in self.frames.iter().enumerate() {
            let kind = if i % gop_length == 0 {
                FrameKind::I
            } else {
                FrameKind::P
            };
            if kind == FrameKind::I {
                shared = gaussian_field(h, w, noise.sigma_shared, &mut rng);
            }
            // the observable signal of the first encode is what gets recoded
            let mut content = frame.pixels();
            if kind == FrameKind::I {
                block_dct_double_quantize(&mut content, quantizer)?;
            }
            let indep = gaussian_field(h, w, noise.sigma_indep, &mut rng);
            out.push(GopFrame {
                kind,
                content,
                noise: &shared + &indep,
            });
        }
        Ok(GopSequence {
            frames: out,
            gop_length,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_sequence(pattern: &str) -> GopSequence {
        let spec = SequenceSpec::new(32, 32, pattern, 5);
        GopSequence::synthesize(&spec, 7).unwrap()
    }

    #[test]
    fn synthesize_respects_pattern() {
        let seq = demo_sequence("IPPBP");
        assert_eq!(seq.pattern(), "IPPBP");
    }

    #[test]
    fn delete_count_conservation() {
        let seq = demo_sequence("IBBPBBPBBPI");
        assert_eq!(seq.len(), 11);
        let out = seq.delete_frames(&[4, 5, 6]).unwrap();
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn delete_empty_set_is_identity() {
        let seq = demo_sequence("IPPPP");
        let out = seq.delete_frames(&[]).unwrap();
        assert_eq!(out.len(), seq.len());
        for (a, b) in seq.frames.iter().zip(&out.frames) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.content, b.content);
        }
    }

    #[test]
    fn delete_shifts_later_frames_left() {
        // I P P P P I, drop index 3 (the fourth frame): the old fifth and
        // sixth frames land at positions 3 and 4.
        let seq = demo_sequence("IPPPPI");
        let out = seq.delete_frames(&[3]).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(out.frames[3].content, seq.frames[4].content);
        assert_eq!(out.frames[4].content, seq.frames[5].content);
        assert_eq!(out.frames[4].kind, FrameKind::I);
    }

    #[test]
    fn delete_all_frames_is_error() {
        let seq = demo_sequence("IPP");
        assert!(matches!(
            seq.delete_frames(&[0, 1, 2]),
            Err(SimError::DeleteAll(3))
        ));
    }

    #[test]
    fn delete_bad_index_is_error() {
        let seq = demo_sequence("IPP");
        assert!(seq.delete_frames(&[5]).is_err());
    }

    #[test]
    fn reencode_assigns_fresh_types() {
        let seq = demo_sequence("IBBPBBPBBPI");
        let out = seq
            .reencode(4, QuantizerSpec::new(1, 2).unwrap(), NoiseSpec::default(), 3)
            .unwrap();
        assert_eq!(out.pattern(), "IPPPIPPPIPP");
        assert!(out.frames.iter().all(|f| f.kind != FrameKind::B));
    }

    #[test]
    fn reencode_whole_sequence_as_single_gop() {
        let seq = demo_sequence("IPPPP");
        let out = seq
            .reencode(5, QuantizerSpec::new(1, 2).unwrap(), NoiseSpec::default(), 3)
            .unwrap();
        assert_eq!(out.pattern(), "IPPPP");
    }

    #[test]
    fn reencode_after_deletion_mixes_source_gops() {
        // Two source GOPs of 5; deleting 3 frames pulls second-GOP frames
        // into the first re-encoded GOP.
        let seq = demo_sequence("IPPPPIPPPP");
        let deleted = seq.delete_frames(&[2, 3, 4]).unwrap();
        let out = deleted
            .reencode(5, QuantizerSpec::new(1, 2).unwrap(), NoiseSpec::default(), 9)
            .unwrap();
        assert_eq!(out.len(), 7);
        // first new GOP holds positions 0..5 = source frames 0,1,5,6,7:
        // frames from both source GOPs now share a GOP
        assert_eq!(out.frames[2].content, seq.frames[5].pixels());
    }
}
