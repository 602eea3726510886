//! Experiment orchestration for the descent laboratory: configuration,
//! deterministic parallel sweeps with crash-safe CSV emission, peak
//! detection and classification, dataset ingestion, and figure recipes.
//!
//! The heavy numerics live in `rflab-core`; this crate turns them into
//! repeatable experiments:
//!
//! * [`config`] — the JSON sweep configuration, grid expansion, and the
//!   provenance hash stamped on every output row;
//! * [`sweep`] — the work-queue executor: independent cells run on a rayon
//!   pool, a single writer appends completed cells in deterministic order,
//!   and a sidecar marker file makes interrupted sweeps resumable;
//! * [`csvio`] — the long-format result schema shared by all experiments;
//! * [`peaks`] — local-maximum detection on log-loss profiles and the
//!   Linear/Nonlinear/Other classification by log-distance to N = D and
//!   N = P;
//! * [`mnist`] — IDX-format ingestion with bilinear downsampling and global
//!   standardization;
//! * [`recipes`] — named, fully resolved desk-scale configurations for the
//!   standard figures.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod mnist;
pub mod peaks;
pub mod recipes;
pub mod sweep;

use std::fmt;

/// Orchestrator-level error: configuration problems are distinguished from
/// runtime failures because they map to different process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("core error: {0}")]
    Core(#[from] rflab_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset format error: {0}")]
    DatasetFormat(String),
    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),
    #[error("sweep finished with {failed} failed cell(s) out of {total}")]
    PartialFailure { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for partial
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InsufficientGrid(_) => 2,
            Error::PartialFailure { .. } => 3,
            _ => 1,
        }
    }
}
