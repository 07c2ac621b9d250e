use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_audio, decode_pcm16_b64, encode_pcm16_b64, ApiStyle, BackendConfig, GatewayError, LlmBackend,
    LlmRequest, MusicBackend, MusicRequest,
};
use crate::assembler::AudioSegment;

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Connection refused, DNS failure, timeout and the like. Retried.
    Unreachable(String),
    /// The server answered with a non-2xx status.
    Status { code: u16, body: String },
}

/// Minimal POST transport so the retry policy can be tested without sockets.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        content_type: &str,
        body: &[u8],
        auth_token: Option<&str>,
        timeout: Duration,
    ) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        content_type: &str,
        body: &[u8],
        auth_token: Option<&str>,
        timeout: Duration,
    ) -> Result<Vec<u8>, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut request = agent.post(url).header("Content-Type", content_type);
        if let Some(token) = auth_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request
            .send(body)
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let code = response.status().as_u16();
        let bytes = response
            .body_mut()
            .with_config()
            .limit(1 << 31)
            .read_to_vec()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        if (200..300).contains(&code) {
            Ok(bytes)
        } else {
            Err(TransportError::Status { code, body: String::from_utf8_lossy(&bytes).into_owned() })
        }
    }
}

/// Caps the number of concurrent requests against one backend.
#[derive(Debug)]
pub struct InflightLimiter {
    max: usize,
    active: Mutex<usize>,
    released: Condvar,
}

pub struct InflightPermit<'a> {
    limiter: &'a InflightLimiter,
}

impl InflightLimiter {
    pub fn new(max: usize) -> Self {
        Self { max: max.max(1), active: Mutex::new(0), released: Condvar::new() }
    }

    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut active = self.active.lock().expect("limiter poisoned");
        while *active >= self.max {
            active = self.released.wait(active).expect("limiter poisoned");
        }
        *active += 1;
        InflightPermit { limiter: self }
    }

    pub fn active(&self) -> usize {
        *self.active.lock().expect("limiter poisoned")
    }
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut active = self.limiter.active.lock().expect("limiter poisoned");
        *active -= 1;
        self.limiter.released.notify_one();
    }
}

/// POSTs `body`, retrying transport failures and 5xx answers with exponential
/// backoff (`backoff_base_s`, doubling). Makes `max_retries + 1` attempts at most.
pub fn post_with_retry(
    transport: &dyn Transport,
    cfg: &BackendConfig,
    content_type: &str,
    body: &[u8],
) -> Result<Vec<u8>, GatewayError> {
    cfg.validate()?;
    let token = cfg.resolve_auth();
    let timeout = Duration::from_secs_f64(cfg.timeout_s);
    let attempts = cfg.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            let delay = cfg.backoff_base_s * f64::from(1u32 << (attempt - 1).min(16));
            log::debug!("retrying {} in {delay:.2} s ({last_error})", cfg.endpoint_url);
            std::thread::sleep(Duration::from_secs_f64(delay));
        }
        match transport.post(&cfg.endpoint_url, content_type, body, token.as_deref(), timeout) {
            Ok(bytes) => return Ok(bytes),
            Err(TransportError::Unreachable(e)) => last_error = e,
            Err(TransportError::Status { code, body }) if code >= 500 => {
                last_error = format!("status {code}: {body}");
            }
            Err(TransportError::Status { code, body }) => {
                return Err(GatewayError::Rejected { status: code, body })
            }
        }
    }
    Err(GatewayError::BackendUnavailable { attempts, last_error })
}

#[derive(Deserialize)]
struct LlmResponse {
    text: String,
}

/// Chat-completion client speaking the `{system, messages, temperature, seed}` → `{text}` protocol.
pub struct HttpLlm<T: Transport = UreqTransport> {
    cfg: BackendConfig,
    transport: T,
    limiter: InflightLimiter,
}

impl HttpLlm<UreqTransport> {
    pub fn new(cfg: BackendConfig) -> Result<Self, GatewayError> {
        Self::with_transport(cfg, UreqTransport)
    }
}

impl<T: Transport> HttpLlm<T> {
    pub fn with_transport(cfg: BackendConfig, transport: T) -> Result<Self, GatewayError> {
        cfg.validate()?;
        cfg.expect_style(ApiStyle::ChatCompletion)?;
        let limiter = InflightLimiter::new(cfg.max_in_flight);
        Ok(Self { cfg, transport, limiter })
    }
}

impl<T: Transport> LlmBackend for HttpLlm<T> {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let body = serde_json::to_vec(req).expect("request serializes");
        let bytes = {
            let _permit = self.limiter.acquire();
            post_with_retry(&self.transport, &self.cfg, "application/json", &body)?
        };
        let parsed: LlmResponse =
            serde_json::from_slice(&bytes).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        Ok(parsed.text)
    }
}

#[derive(Serialize)]
struct MusicWireRequest<'a> {
    description: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    previous_audio_b64: Option<String>,
    duration_s: f64,
    sample_rate_hz: u32,
}

#[derive(Deserialize)]
struct MusicWireResponse {
    audio_b64: String,
    sample_rate_hz: u32,
}

/// Text-to-music client; audio travels as base64 little-endian 16-bit PCM.
pub struct HttpMusic<T: Transport = UreqTransport> {
    cfg: BackendConfig,
    transport: T,
    limiter: InflightLimiter,
}

impl HttpMusic<UreqTransport> {
    pub fn new(cfg: BackendConfig) -> Result<Self, GatewayError> {
        Self::with_transport(cfg, UreqTransport)
    }
}

impl<T: Transport> HttpMusic<T> {
    pub fn with_transport(cfg: BackendConfig, transport: T) -> Result<Self, GatewayError> {
        cfg.validate()?;
        cfg.expect_style(ApiStyle::TextToMusic)?;
        let limiter = InflightLimiter::new(cfg.max_in_flight);
        Ok(Self { cfg, transport, limiter })
    }
}

impl<T: Transport> MusicBackend for HttpMusic<T> {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
        req.validate()?;
        let wire = MusicWireRequest {
            description: &req.description,
            previous_audio_b64: req.previous_audio_tail.as_ref().map(|t| encode_pcm16_b64(&t.samples)),
            duration_s: req.duration_s,
            sample_rate_hz: req.sample_rate_hz,
        };
        let body = serde_json::to_vec(&wire).expect("request serializes");
        let bytes = {
            let _permit = self.limiter.acquire();
            post_with_retry(&self.transport, &self.cfg, "application/json", &body)?
        };
        let parsed: MusicWireResponse =
            serde_json::from_slice(&bytes).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let audio = AudioSegment {
            samples: decode_pcm16_b64(&parsed.audio_b64)?,
            sample_rate_hz: parsed.sample_rate_hz,
            index: 0,
        };
        check_audio(req, &audio)?;
        Ok(audio)
    }
}
