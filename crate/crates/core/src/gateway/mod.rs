//! Clients for the language-model and text-to-music backends.
//!
//! Both backends sit behind small traits so the pipeline can run against
//! real HTTP servers or against the deterministic mocks in [`mock`].

mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembler::AudioSegment;

pub use http::{
    post_with_retry, HttpLlm, HttpMusic, InflightLimiter, Transport, TransportError, UreqTransport,
};
pub use mock::{mock_music_synthesize, MockLlm, MockMusic};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_SEGMENT_S: f64 = 30.0;
/// Trailing audio of the previous segment handed to the music backend.
pub const PREVIOUS_TAIL_S: f64 = 10.0;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("backend returned {found} samples, expected {expected}")]
    DurationMismatch { expected: usize, found: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

/// A chat-style completion request. Field order is the canonical order used
/// for cache keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    #[serde(rename = "system")]
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.last() {
            None => Err(GatewayError::InvalidRequest("messages must not be empty".into())),
            Some(m) if m.role != Role::User => {
                Err(GatewayError::InvalidRequest("last message must come from the user".into()))
            }
            _ if !(0.0..=1.0).contains(&self.temperature) => Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            ))),
            _ => Ok(()),
        }
    }

    pub fn last_user_text(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicRequest {
    pub description: String,
    pub previous_audio_tail: Option<AudioSegment>,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

impl MusicRequest {
    pub fn expected_samples(&self) -> usize {
        crate::assembler::seconds_to_samples(self.duration_s, self.sample_rate_hz)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("duration {} s must be positive", self.duration_s)));
        }
        if self.sample_rate_hz == 0 {
            return Err(GatewayError::InvalidRequest("sample rate must be positive".into()));
        }
        if let Some(tail) = &self.previous_audio_tail {
            if tail.sample_rate_hz != self.sample_rate_hz {
                return Err(GatewayError::InvalidRequest(format!(
                    "previous audio is at {} Hz but {} Hz was requested",
                    tail.sample_rate_hz, self.sample_rate_hz
                )));
            }
        }
        Ok(())
    }

    /// Hash of the conditioning audio; 0 when there is none.
    pub fn tail_hash(&self) -> u64 {
        self.previous_audio_tail
            .as_ref()
            .map(|t| crate::hashing::audio_hash(&t.samples))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    ChatCompletion,
    TextToMusic,
    Embedding,
}

fn default_timeout_s() -> f64 {
    120.0
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_base_s() -> f64 {
    1.0
}
fn default_max_in_flight() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    pub api_style: ApiStyle,
    /// Never written back out; manifests only record whether a token was set.
    #[serde(default, skip_serializing)]
    pub auth_token: Option<String>,
    /// Name of an environment variable holding the token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_backoff_base_s")]
    pub backoff_base_s: f64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, api_style: ApiStyle) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            timeout_s: default_timeout_s(),
            max_retries: default_max_retries(),
            api_style,
            auth_token: None,
            auth_token_env: None,
            backoff_base_s: default_backoff_base_s(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("timeout {} s must be positive", self.timeout_s)));
        }
        if self.backoff_base_s < 0.0 || !self.backoff_base_s.is_finite() {
            return Err(GatewayError::InvalidRequest("backoff base must be non-negative".into()));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidRequest("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }

    pub fn expect_style(&self, style: ApiStyle) -> Result<(), GatewayError> {
        if self.api_style != style {
            return Err(GatewayError::InvalidRequest(format!(
                "backend {} is configured as {:?}, expected {:?}",
                self.endpoint_url, self.api_style, style
            )));
        }
        Ok(())
    }

    /// The explicit token wins over the environment variable.
    pub fn resolve_auth(&self) -> Option<String> {
        self.auth_token
            .clone()
            .or_else(|| self.auth_token_env.as_ref().and_then(|var| std::env::var(var).ok()))
            .filter(|t| !t.is_empty())
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError>;
}

pub trait MusicBackend: Send + Sync {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

impl<T: MusicBackend + ?Sized> MusicBackend for &T {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
        (**self).generate(req)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }
}

impl<T: MusicBackend + ?Sized> MusicBackend for Box<T> {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
        (**self).generate(req)
    }
}

/// Runs a completion after checking the request shape.
pub fn llm_complete(backend: &dyn LlmBackend, req: &LlmRequest) -> Result<String, GatewayError> {
    req.validate()?;
    backend.complete(req)
}

/// Generates audio and refuses anything that is not exactly the requested length.
pub fn music_generate(backend: &dyn MusicBackend, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
    req.validate()?;
    let audio = backend.generate(req)?;
    check_audio(req, &audio)?;
    Ok(audio)
}

pub(crate) fn check_audio(req: &MusicRequest, audio: &AudioSegment) -> Result<(), GatewayError> {
    if audio.sample_rate_hz != req.sample_rate_hz {
        return Err(GatewayError::MalformedResponse(format!(
            "audio returned at {} Hz, requested {} Hz",
            audio.sample_rate_hz, req.sample_rate_hz
        )));
    }
    let expected = req.expected_samples();
    if audio.samples.len() != expected {
        return Err(GatewayError::DurationMismatch { expected, found: audio.samples.len() });
    }
    if audio.samples.iter().any(|s| !s.is_finite()) {
        return Err(GatewayError::MalformedResponse("audio contains non-finite samples".into()));
    }
    Ok(())
}

/// Base64 of little-endian 16-bit PCM.
pub fn encode_pcm16_b64(samples: &[f32]) -> String {
    use base64::Engine as _;
    let bytes: Vec<u8> = samples
        .iter()
        .flat_map(|&s| crate::assembler::quantize(s).to_le_bytes())
        .collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_pcm16_b64(encoded: &str) -> Result<Vec<f32>, GatewayError> {
    use base64::Engine as _;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(encoded.trim())
        .map_err(|e| GatewayError::MalformedResponse(format!("invalid base64 audio: {e}")))?;
    if bytes.len() % 2 != 0 {
        return Err(GatewayError::MalformedResponse("PCM payload has an odd byte count".into()));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| crate::assembler::dequantize(i16::from_le_bytes([c[0], c[1]])))
        .collect())
}
