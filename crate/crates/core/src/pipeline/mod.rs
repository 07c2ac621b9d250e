//! Configuration, caching and the two end-to-end runs: `generate` (transcript
//! to soundtrack) and `eval` (soundtrack to metric report).

pub mod cache;
pub mod config;
mod eval;
mod generate;
pub mod manifest;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::assembler::AssemblyError;
use crate::gateway::GatewayError;
use crate::ingest::IngestError;
use crate::metrics::MetricsError;

pub use cache::{cache_key, CachedLlm, CachedMusic, CallRecord, ResponseCache};
pub use config::{EmbeddingSource, EvalSettings, MockRule, Overrides, RunConfig};
pub use eval::{load_report, make_embedder, nominal_transitions, run_eval, write_report, REPORT_JSON_FILE, REPORT_TEXT_FILE};
pub use generate::{load_segments, run_generate};
pub use manifest::{RunManifest, RunStatus, SegmentRecord, MANIFEST_FILE, SEGMENTS_FILE, TRACK_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transcript: {0}")]
    Ingest(#[from] IngestError),
    #[error("run incomplete ({reason}); partial manifest at {}", manifest_path.display())]
    Incomplete { manifest_path: PathBuf, reason: String },
    #[error("backend: {0}")]
    Gateway(#[from] GatewayError),
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for bad configuration or input, 2 for a run that started and failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Ingest(_) => 1,
            _ => 2,
        }
    }
}
