//! Toolkit for deciding whether an image or video was shared through a
//! specific social-media platform.
//!
//! The crate has three pillars:
//!
//! - [`sim`] — a verifiable model of what sharing pipelines do to media:
//!   single and double quantization, GOP-aware frame deletion, re-encoding
//!   with correlated noise, and block-motion error profiling. It doubles as
//!   a synthetic "platform upload" generator for desk-scale datasets.
//! - [`dataset`] + [`model`] + [`train`] — ingestion of labeled media into
//!   non-overlapping 256x256 patch manifests, and a constrained-first-layer
//!   CNN trained under three regimes: single-task, layer-freezing transfer,
//!   and weight-shared multitask with a weighted joint loss.
//! - [`eval`] + [`experiment`] — patch- and media-level (majority vote)
//!   metrics, confusion matrices, regime comparison reports, and a config
//!   driven experiment runner with provenance checksums.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod experiment;
pub mod media;
pub mod model;
pub mod sim;
pub mod train;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Top-level error, grouping the per-subsystem errors so the CLI can map
/// them onto exit codes (usage/config vs data vs internal).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Exit code contract: 1 usage/config error, 2 data error, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Dataset(_) | Error::Sim(_) | Error::Io { .. } => 2,
            Error::Model(_) | Error::Train(_) | Error::Eval(_) => 3,
        }
    }
}
