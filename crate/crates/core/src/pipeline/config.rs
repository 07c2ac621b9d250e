use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::assembler::{DEFAULT_HALF_WINDOW_S, DEFAULT_SAMPLE_RATE_HZ};
use crate::director::{Strategy, DEFAULT_CONTEXT_LIMIT};
use crate::gateway::{ApiStyle, BackendConfig, DEFAULT_TEMPERATURE};
use crate::ingest::{DEFAULT_LANGUAGE_TAG, DEFAULT_WINDOW_S};
use crate::metrics::{
    HttpEmbedderConfig, KldDirection, ProbabilityMapping, DEFAULT_EVAL_WINDOW_MINUTES, FAD_SEGMENT_S, KLD_SEGMENT_S,
};

/// Where evaluation embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
#[derive(Default)]
pub enum EmbeddingSource {
    /// Built-in spectral features; no network, deterministic.
    #[default]
    Mock,
    Http(HttpEmbedderConfig),
}

/// One scripted reply for the mock language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring of the transcript excerpt that triggers the reply.
    #[serde(rename = "match")]
    pub needle: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub window_minutes: f64,
    pub kld_direction: KldDirection,
    pub probability_mapping: ProbabilityMapping,
    pub fad_segment_s: f64,
    pub kld_segment_s: f64,
    pub transition_half_window_s: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            window_minutes: DEFAULT_EVAL_WINDOW_MINUTES,
            kld_direction: KldDirection::default(),
            probability_mapping: ProbabilityMapping::default(),
            fad_segment_s: FAD_SEGMENT_S,
            kld_segment_s: KLD_SEGMENT_S,
            transition_half_window_s: DEFAULT_HALF_WINDOW_S,
        }
    }
}

/// Everything a run needs. Loaded from TOML or JSON; absent keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub campaign_name: String,
    pub transcript_path: Option<PathBuf>,
    pub strategy: Strategy,
    pub window_s: f64,
    /// Total timeline length; defaults to the transcript rounded up to whole windows.
    pub total_duration_s: Option<f64>,
    pub language_tag: String,
    pub seed: u64,
    pub temperature: f64,
    pub context_limit: usize,
    pub sample_rate_hz: u32,
    pub crossfade_ms: u32,
    pub output_dir: PathBuf,
    pub use_cache: bool,
    pub mock_llm: bool,
    pub mock_music: bool,
    pub mock_llm_rules: Vec<MockRule>,
    pub llm_backend: Option<BackendConfig>,
    pub music_backend: Option<BackendConfig>,
    pub embedding_source: EmbeddingSource,
    /// The campaign's original background music (WAV or logits file).
    pub reference_audio_path: Option<PathBuf>,
    /// Reference music corpus for FAD (WAV or embedding file).
    pub reference_corpus_path: Option<PathBuf>,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            campaign_name: "campaign".into(),
            transcript_path: None,
            strategy: Strategy::Baseline,
            window_s: DEFAULT_WINDOW_S,
            total_duration_s: None,
            language_tag: DEFAULT_LANGUAGE_TAG.into(),
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            context_limit: DEFAULT_CONTEXT_LIMIT,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            crossfade_ms: 0,
            output_dir: PathBuf::from("out"),
            use_cache: true,
            mock_llm: false,
            mock_music: false,
            mock_llm_rules: Vec::new(),
            llm_backend: None,
            music_backend: None,
            embedding_source: EmbeddingSource::default(),
            reference_audio_path: None,
            reference_corpus_path: None,
            eval: EvalSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub campaign_name: Option<String>,
    pub transcript_path: Option<PathBuf>,
    pub strategy: Option<Strategy>,
    pub window_s: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub mock_llm: bool,
    pub mock_music: bool,
    pub mock_embed: bool,
    pub no_cache: bool,
    pub reference_audio_path: Option<PathBuf>,
    pub reference_corpus_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("invalid TOML config: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("invalid JSON config: {e}")))
    }

    /// `.json` files parse as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    /// Defaults, then the optional file, then the flags.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, PipelineError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.campaign_name {
            self.campaign_name = v.clone();
        }
        if let Some(v) = &o.transcript_path {
            self.transcript_path = Some(v.clone());
        }
        if let Some(v) = o.strategy {
            self.strategy = v;
        }
        if let Some(v) = o.window_s {
            self.window_s = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.reference_audio_path {
            self.reference_audio_path = Some(v.clone());
        }
        if let Some(v) = &o.reference_corpus_path {
            self.reference_corpus_path = Some(v.clone());
        }
        self.mock_llm |= o.mock_llm;
        self.mock_music |= o.mock_music;
        if o.mock_embed {
            self.embedding_source = EmbeddingSource::Mock;
        }
        if o.no_cache {
            self.use_cache = false;
        }
    }

    fn check_backend(cfg: &Option<BackendConfig>, mock: bool, style: ApiStyle, what: &str) -> Result<(), PipelineError> {
        if mock {
            return Ok(());
        }
        let backend = cfg
            .as_ref()
            .ok_or_else(|| PipelineError::Config(format!("no {what} backend configured and mock not selected")))?;
        backend
            .validate()
            .and_then(|_| backend.expect_style(style))
            .map_err(|e| PipelineError::Config(format!("{what} backend: {e}")))
    }

    fn check_common(&self) -> Result<(), PipelineError> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(PipelineError::Config(format!("window_s must be positive, got {}", self.window_s)));
        }
        if self.sample_rate_hz == 0 {
            return Err(PipelineError::Config("sample_rate_hz must be positive".into()));
        }
        if self.campaign_name.trim().is_empty() {
            return Err(PipelineError::Config("campaign_name must not be empty".into()));
        }
        Ok(())
    }

    /// Checks everything `generate` needs before any backend is contacted.
    pub fn validate_for_generate(&self) -> Result<(), PipelineError> {
        self.check_common()?;
        let transcript = self
            .transcript_path
            .as_ref()
            .ok_or_else(|| PipelineError::Config("transcript_path is required".into()))?;
        if !transcript.is_file() {
            return Err(PipelineError::Config(format!("transcript {} does not exist", transcript.display())));
        }
        if let Some(total) = self.total_duration_s {
            if !(total > 0.0 && total.is_finite()) {
                return Err(PipelineError::Config(format!("total_duration_s must be positive, got {total}")));
            }
        }
        if self.strategy != Strategy::Baseline {
            Self::check_backend(&self.llm_backend, self.mock_llm, ApiStyle::ChatCompletion, "LLM")?;
        }
        Self::check_backend(&self.music_backend, self.mock_music, ApiStyle::TextToMusic, "music")
    }

    /// Checks everything `eval` needs.
    pub fn validate_for_eval(&self) -> Result<(), PipelineError> {
        self.check_common()?;
        let e = &self.eval;
        for (name, v) in [
            ("eval.window_minutes", e.window_minutes),
            ("eval.fad_segment_s", e.fad_segment_s),
            ("eval.kld_segment_s", e.kld_segment_s),
            ("eval.transition_half_window_s", e.transition_half_window_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for p in [&self.reference_audio_path, &self.reference_corpus_path].into_iter().flatten() {
            if !p.is_file() {
                return Err(PipelineError::Config(format!("reference {} does not exist", p.display())));
            }
        }
        if let EmbeddingSource::Http(h) = &self.embedding_source {
            h.backend
                .validate()
                .and_then(|_| h.backend.expect_style(ApiStyle::Embedding))
                .map_err(|e| PipelineError::Config(format!("embedding backend: {e}")))?;
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }
}
