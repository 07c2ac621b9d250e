//! Evaluation metrics: Fréchet Audio Distance for quality, paired KL-divergence
//! for story alignment, and KL-divergence across transitions for smoothness.

mod divergence;
pub mod embedding;
mod gaussian;
pub mod report;
mod window;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use divergence::{
    kld, softmax, story_alignment, transition_smoothness, ClassProbabilities, KldDirection, MeanStd,
    ProbabilityMapping, PROBABILITY_FLOOR,
};
pub use embedding::{Embedder, EmbeddingKind, EmbeddingMatrix, HttpEmbedder, HttpEmbedderConfig, SpectralEmbedder};
pub use gaussian::{fad_score, fit_gaussian, frechet_distance, GaussianStats, COVARIANCE_EPSILON, EIGEN_CLAMP};
pub use report::{render_report, render_tables, EvalWindow, MetricOutcome, MetricReport, ReportSettings};
pub use window::{sample_eval_window, DEFAULT_EVAL_WINDOW_MINUTES};

pub const FAD_SEGMENT_S: f64 = 30.0;
pub const KLD_SEGMENT_S: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("at least two samples are needed to fit a Gaussian, got {n}")]
    TooFewSamples { n: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite result: {0}")]
    NonFiniteResult(String),
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("{reference} reference segments but {generated} generated segments")]
    LengthMismatch { reference: usize, generated: usize },
    #[error("no segment pairs to compare")]
    NoPairs,
    #[error("no transition could be evaluated")]
    NoValidTransitions,
    #[error("track of {duration_s} s is shorter than the {window_s} s evaluation window")]
    TrackTooShort { duration_s: f64, window_s: f64 },
    #[error("audio of {duration_s} s is shorter than one {span_s} s window")]
    AudioTooShort { duration_s: f64, span_s: f64 },
    #[error("embedding source mismatch: expected {expected:?}, found {found:?}")]
    SourceMismatch { expected: String, found: String },
    #[error("malformed embedding data: {0}")]
    MalformedEmbedding(String),
    #[error("embedding backend: {0}")]
    Backend(#[from] GatewayError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
