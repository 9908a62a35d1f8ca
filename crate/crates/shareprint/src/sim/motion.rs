//! Block-motion compensation and per-frame motion-error profiling.
//!
//! The compensator predicts each frame from its predecessor with an
//! exhaustive translational block search; the per-frame mean absolute
//! residual is the motion error. Frames whose noise decorrelated from
//! their predecessor (because deletion pulled them across a GOP
//! boundary) show an elevated error.

use ndarray::Array2;

use super::gop::{FrameKind, GopSequence};
use super::SimError;

/// Block search parameters. Defaults: 16x16 blocks, +-8 px range,
/// sum-of-absolute-differences criterion.
#[derive(Debug, Clone, Copy)]
pub struct MotionSearch {
    pub block: usize,
    pub range: i64,
}

impl Default for MotionSearch {
    fn default() -> Self {
        MotionSearch { block: 16, range: 8 }
    }
}

/// Per-frame motion errors for a sequence. Index 0 has no predecessor and
/// carries no error entry; `errors[i]` belongs to frame `i + 1`.
#[derive(Debug, Clone)]
pub struct MotionErrorProfile {
    pub errors: Vec<f64>,
    /// True where frame `i + 1` opens a GOP in the current frame typing.
    pub gop_boundary_flags: Vec<bool>,
}

impl MotionErrorProfile {
    /// Error of the predicted frame at sequence position `pos` (>= 1).
    pub fn error_at(&self, pos: usize) -> f64 {
        self.errors[pos - 1]
    }
}

fn sad_block(
    cur: &Array2<f32>,
    prev: &Array2<f32>,
    by: usize,
    bx: usize,
    bh: usize,
    bw: usize,
    dy: i64,
    dx: i64,
) -> Option<f64> {
    let (h, w) = prev.dim();
    let sy = by as i64 + dy;
    let sx = bx as i64 + dx;
    if sy < 0 || sx < 0 || sy + bh as i64 > h as i64 || sx + bw as i64 > w as i64 {
        return None;
    }
    let (sy, sx) = (sy as usize, sx as usize);
    let mut acc = 0.0f64;
    for y in 0..bh {
        for x in 0..bw {
            acc += (cur[[by + y, bx + x]] - prev[[sy + y, sx + x]]).abs() as f64;
        }
    }
    Some(acc)
}

/// Mean absolute residual of predicting `cur` from `prev` with exhaustive
/// per-block translational search.
pub fn block_motion_error(cur: &Array2<f32>, prev: &Array2<f32>, search: MotionSearch) -> f64 {
    let (h, w) = cur.dim();
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut by = 0;
    while by < h {
        let bh = search.block.min(h - by);
        let mut bx = 0;
        while bx < w {
            let bw = search.block.min(w - bx);
            let mut best = f64::INFINITY;
            for dy in -search.range..=search.range {
                for dx in -search.range..=search.range {
                    if let Some(sad) = sad_block(cur, prev, by, bx, bh, bw, dy, dx) {
                        if sad < best {
                            best = sad;
                        }
                    }
                }
            }
            total += best;
            count += bh * bw;
            bx += search.block;
        }
        by += search.block;
    }
    total / count as f64
}

/// Motion errors for every predicted frame of `seq`.
pub fn motion_error_profile(
    seq: &GopSequence,
    search: MotionSearch,
) -> Result<MotionErrorProfile, SimError> {
    if seq.len() < 2 {
        return Err(SimError::SequenceTooShort {
            need: 2,
            got: seq.len(),
        });
    }
    let pixels: Vec<Array2<f32>> = seq.frames.iter().map(|f| f.pixels()).collect();
    let mut errors = Vec::with_capacity(seq.len() - 1);
    let mut flags = Vec::with_capacity(seq.len() - 1);
    for i in 1..seq.len() {
        errors.push(block_motion_error(&pixels[i], &pixels[i - 1], search));
        flags.push(seq.frames[i].kind == FrameKind::I);
    }
    Ok(MotionErrorProfile {
        errors,
        gop_boundary_flags: flags,
    })
}

/// One-sided p-value that the mean of `deltas` is above zero, via a
/// Student-t test. Used by callers comparing boundary vs within-GOP
/// motion errors over repeated noise seeds.
pub fn one_sided_p_above_zero(deltas: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let n = deltas.len();
    assert!(n >= 2, "need at least two observations");
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= f64::EPSILON {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    1.0 - dist.cdf(t)
}
