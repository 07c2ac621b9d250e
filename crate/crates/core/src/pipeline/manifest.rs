use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cache::CallRecord;
use super::config::RunConfig;
use super::PipelineError;
use crate::director::MusicDescription;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub transcript_text: String,
    pub description: MusicDescription,
    pub audio_samples: usize,
    /// SHA-256 of the segment's raw f32 little-endian samples.
    pub audio_sha256: String,
    pub llm_calls: Vec<CallRecord>,
    pub music_call: CallRecord,
    pub describe_ms: f64,
    pub render_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub total_ms: f64,
    pub describe_ms: f64,
    pub render_ms: f64,
    pub assemble_ms: f64,
}

/// Record of one `generate` run; together with the same backends and seed it
/// is enough to re-execute the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tool_version: String,
    pub config: RunConfig,
    pub transcript_segment_count: usize,
    pub segments: Vec<SegmentRecord>,
    /// Segment hand-over instants in seconds from the start of the track.
    pub transitions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_duration_s: Option<f64>,
    pub artifacts: Vec<ArtifactRecord>,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACK_FILE: &str = "soundtrack.wav";
pub const SEGMENTS_FILE: &str = "transcript_segments.json";

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::Config(format!("{} is not a run manifest: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    /// Copy with wall-clock and cache-state fields cleared, for comparing
    /// two runs of the same configuration.
    pub fn without_run_state(&self) -> Self {
        let mut m = self.clone();
        m.timings = Timings::default();
        let clear = |c: &mut CallRecord| {
            c.latency_ms = 0.0;
            c.cache_hit = false;
            c.evicted_corrupt_entry = false;
        };
        for s in &mut m.segments {
            s.describe_ms = 0.0;
            s.render_ms = 0.0;
            s.llm_calls.iter_mut().for_each(clear);
            clear(&mut s.music_call);
        }
        m
    }

    pub fn cache_hits(&self) -> usize {
        self.segments
            .iter()
            .flat_map(|s| s.llm_calls.iter().chain(std::iter::once(&s.music_call)))
            .filter(|c| c.cache_hit)
            .count()
    }
}
