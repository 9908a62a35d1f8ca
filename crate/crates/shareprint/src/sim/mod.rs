//! Sharing-pipeline simulation: quantization math, GOP-aware frame
//! deletion and re-encoding, block-motion error profiling, and synthetic
//! "platform upload" pipelines for building desk-scale datasets.

mod corpus;
mod gop;
mod motion;
mod pipeline;
mod quant;

pub use corpus::{generate_corpus, CorpusSpec};
pub use gop::{FrameKind, GopFrame, GopSequence, NoiseSpec, SequenceSpec};
pub use motion::{block_motion_error, motion_error_profile, one_sided_p_above_zero, MotionErrorProfile, MotionSearch};
pub use pipeline::{apply_pipeline_image, apply_pipeline_video, ChainRecord, PipelineFile, PipelineSpec};
pub use quant::{
    block_dct_double_quantize, detect_dq_periodicity, dq_histogram, double_quantize, quantize,
    DqCalibration, QuantizerSpec, DEFAULT_DQ_SCORE_THRESHOLD,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("quantization step must be >= 1")]
    ZeroStep,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("frame index {index} out of range for sequence of length {len}")]
    BadFrameIndex { index: usize, len: usize },
    #[error("deleting all {0} frames leaves an empty sequence")]
    DeleteAll(usize),
    #[error("sequence too short: need at least {need} frames, got {got}")]
    SequenceTooShort { need: usize, got: usize },
    #[error("pipeline {name} produced a {width}x{height} frame, below the 256x256 patch size")]
    FrameTooSmall {
        name: String,
        width: usize,
        height: usize,
    },
    #[error("invalid pipeline spec {name}: {reason}")]
    BadPipeline { name: String, reason: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("media error at {path}: {reason}")]
    Media { path: PathBuf, reason: String },
}
