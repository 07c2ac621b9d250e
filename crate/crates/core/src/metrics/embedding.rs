//! Embedding matrices, their binary file format, and embedding backends.
//!
//! File layout: one header line of JSON
//! `{"d": int, "n": int, "segment_span_s": float, "source_tag": str, "kind": "embedding"|"logits"}`
//! terminated by `\n`, followed by `n·d` little-endian `f32` values in row-major order.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::assembler::seconds_to_samples;
use crate::gateway::{encode_pcm16_b64, post_with_retry, ApiStyle, BackendConfig, InflightLimiter, UreqTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Embedding,
    Logits,
}

/// One row per audio window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    d: usize,
    pub segment_span_s: f64,
    pub source_tag: String,
    pub kind: EmbeddingKind,
}

#[derive(Serialize, Deserialize)]
struct Header {
    d: usize,
    n: usize,
    segment_span_s: f64,
    source_tag: String,
    kind: EmbeddingKind,
}

impl EmbeddingMatrix {
    pub fn new(
        data: Vec<f64>,
        d: usize,
        segment_span_s: f64,
        source_tag: impl Into<String>,
        kind: EmbeddingKind,
    ) -> Result<Self, MetricsError> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(MetricsError::MalformedEmbedding(format!(
                "{} values do not form rows of width {d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFiniteInput);
        }
        Ok(Self { data, d, segment_span_s, source_tag: source_tag.into(), kind })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        segment_span_s: f64,
        source_tag: impl Into<String>,
        kind: EmbeddingKind,
    ) -> Result<Self, MetricsError> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(MetricsError::MalformedEmbedding("rows have different widths".into()));
        }
        Self::new(rows.concat(), d, segment_span_s, source_tag, kind)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> EmbeddingMatrix {
        let end = end.min(self.n());
        let start = start.min(end);
        EmbeddingMatrix { data: self.data[start * self.d..end * self.d].to_vec(), ..self.clone() }
    }

    /// Stacks matrices from the same source and kind.
    pub fn concat(parts: &[EmbeddingMatrix]) -> Result<EmbeddingMatrix, MetricsError> {
        let first = parts.first().ok_or_else(|| MetricsError::MalformedEmbedding("nothing to stack".into()))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.d != first.d {
                return Err(MetricsError::DimensionMismatch { left: first.d, right: p.d });
            }
            if p.source_tag != first.source_tag || p.kind != first.kind {
                return Err(MetricsError::SourceMismatch {
                    expected: first.source_tag.clone(),
                    found: p.source_tag.clone(),
                });
            }
            out.data.extend_from_slice(&p.data);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            d: self.d,
            n: self.n(),
            segment_span_s: self.segment_span_s,
            source_tag: self.source_tag.clone(),
            kind: self.kind,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(self.data.len() * 4);
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MetricsError> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| MetricsError::MalformedEmbedding("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| MetricsError::MalformedEmbedding(format!("bad header: {e}")))?;
        let body = &bytes[newline + 1..];
        let expected = header.n * header.d * 4;
        if body.len() != expected {
            return Err(MetricsError::MalformedEmbedding(format!(
                "header declares {}x{} floats ({expected} bytes) but body has {} bytes",
                header.n,
                header.d,
                body.len()
            )));
        }
        if header.d == 0 {
            return Err(MetricsError::MalformedEmbedding("zero-width rows".into()));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(data, header.d, header.segment_span_s, header.source_tag, header.kind)
    }

    pub fn read(path: &Path) -> Result<Self, MetricsError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Number of whole windows of `span_s` in `n_samples`; a trailing partial window is dropped.
pub fn window_count(n_samples: usize, sample_rate_hz: u32, span_s: f64) -> usize {
    n_samples.checked_div(seconds_to_samples(span_s, sample_rate_hz)).unwrap_or(0)
}

/// Anything that turns audio into per-window embeddings or classifier logits.
pub trait Embedder: Send + Sync {
    fn source_tag(&self, kind: EmbeddingKind) -> String;

    fn embed(
        &self,
        samples: &[f32],
        sample_rate_hz: u32,
        span_s: f64,
        kind: EmbeddingKind,
    ) -> Result<EmbeddingMatrix, MetricsError>;
}

const BAND_COUNT: usize = 16;
const FRAME: usize = 4096;
const LOWEST_BAND_HZ: f64 = 50.0;
const HIGHEST_BAND_HZ: f64 = 8000.0;
const POWER_FLOOR: f64 = 1e-12;

/// Deterministic, model-free embedder: log power in 16 log-spaced frequency
/// bands (50 Hz to 8 kHz), averaged over Hann-windowed 4096-sample frames.
///
/// The same vector serves as an embedding and as logits; as logits its
/// softmax is the share of energy in each band.
pub struct SpectralEmbedder {
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
}

impl Default for SpectralEmbedder {
    fn default() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FRAME);
        let hann = (0..FRAME)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / FRAME as f64).cos())
            .collect();
        Self { fft, hann }
    }
}

impl SpectralEmbedder {
    pub const TAG: &'static str = "spectral-bands-16";

    pub fn new() -> Self {
        Self::default()
    }

    fn band_edges(sample_rate_hz: u32) -> [f64; BAND_COUNT + 1] {
        let top = HIGHEST_BAND_HZ.min(sample_rate_hz as f64 / 2.0);
        let ratio = (top / LOWEST_BAND_HZ).ln();
        std::array::from_fn(|k| LOWEST_BAND_HZ * (ratio * k as f64 / BAND_COUNT as f64).exp())
    }

    fn features(&self, window: &[f32], sample_rate_hz: u32) -> Vec<f64> {
        let edges = Self::band_edges(sample_rate_hz);
        let bin_hz = sample_rate_hz as f64 / FRAME as f64;
        let band_of_bin: Vec<Option<usize>> = (0..=FRAME / 2)
            .map(|bin| {
                let f = bin as f64 * bin_hz;
                (f >= edges[0] && f < edges[BAND_COUNT]).then(|| edges[1..].iter().position(|&e| f < e).unwrap_or(BAND_COUNT - 1))
            })
            .collect();

        let mut power = [0.0f64; BAND_COUNT];
        let mut frames = 0usize;
        let mut buf = vec![Complex::new(0.0, 0.0); FRAME];
        let mut start = 0;
        while start < window.len() {
            let frame = &window[start..(start + FRAME).min(window.len())];
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = frame.get(i).copied().unwrap_or(0.0) as f64;
                *slot = Complex::new(x * self.hann[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (bin, band) in band_of_bin.iter().enumerate() {
                if let Some(b) = band {
                    power[*b] += buf[bin].norm_sqr();
                }
            }
            frames += 1;
            start += FRAME;
        }
        let norm = (frames.max(1) * FRAME) as f64;
        power.iter().map(|p| (p / norm + POWER_FLOOR).ln()).collect()
    }
}

impl Embedder for SpectralEmbedder {
    fn source_tag(&self, _kind: EmbeddingKind) -> String {
        Self::TAG.to_string()
    }

    fn embed(
        &self,
        samples: &[f32],
        sample_rate_hz: u32,
        span_s: f64,
        kind: EmbeddingKind,
    ) -> Result<EmbeddingMatrix, MetricsError> {
        let n = window_count(samples.len(), sample_rate_hz, span_s);
        if n == 0 {
            return Err(MetricsError::AudioTooShort {
                duration_s: samples.len() as f64 / sample_rate_hz as f64,
                span_s,
            });
        }
        let span = seconds_to_samples(span_s, sample_rate_hz);
        let rows: Vec<Vec<f64>> = samples
            .chunks_exact(span)
            .take(n)
            .map(|w| self.features(w, sample_rate_hz))
            .collect();
        EmbeddingMatrix::from_rows(&rows, span_s, Self::TAG, kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub backend: BackendConfig,
    #[serde(default = "default_embedding_tag")]
    pub embedding_model_tag: String,
    #[serde(default = "default_logits_tag")]
    pub logits_model_tag: String,
}

fn default_embedding_tag() -> String {
    "vggish".into()
}
fn default_logits_tag() -> String {
    "passt".into()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    audio: String,
    sample_rate_hz: u32,
    segment_span_s: f64,
    kind: EmbeddingKind,
    model_tag: &'a str,
}

/// Client for an embedding service answering `POST /embed` with the binary matrix format.
pub struct HttpEmbedder {
    cfg: HttpEmbedderConfig,
    limiter: InflightLimiter,
}

impl HttpEmbedder {
    pub fn new(cfg: HttpEmbedderConfig) -> Result<Self, MetricsError> {
        cfg.backend.validate()?;
        cfg.backend.expect_style(ApiStyle::Embedding)?;
        let limiter = InflightLimiter::new(cfg.backend.max_in_flight);
        Ok(Self { cfg, limiter })
    }

    fn model_tag(&self, kind: EmbeddingKind) -> &str {
        match kind {
            EmbeddingKind::Embedding => &self.cfg.embedding_model_tag,
            EmbeddingKind::Logits => &self.cfg.logits_model_tag,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn source_tag(&self, kind: EmbeddingKind) -> String {
        self.model_tag(kind).to_string()
    }

    fn embed(
        &self,
        samples: &[f32],
        sample_rate_hz: u32,
        span_s: f64,
        kind: EmbeddingKind,
    ) -> Result<EmbeddingMatrix, MetricsError> {
        let expected_rows = window_count(samples.len(), sample_rate_hz, span_s);
        if expected_rows == 0 {
            return Err(MetricsError::AudioTooShort {
                duration_s: samples.len() as f64 / sample_rate_hz as f64,
                span_s,
            });
        }
        let body = serde_json::to_vec(&EmbedRequest {
            audio: encode_pcm16_b64(samples),
            sample_rate_hz,
            segment_span_s: span_s,
            kind,
            model_tag: self.model_tag(kind),
        })
        .expect("request serializes");
        let bytes = {
            let _permit = self.limiter.acquire();
            post_with_retry(&UreqTransport, &self.cfg.backend, "application/json", &body)?
        };
        let matrix = EmbeddingMatrix::from_bytes(&bytes)?;
        if matrix.n() != expected_rows || matrix.kind != kind {
            return Err(MetricsError::MalformedEmbedding(format!(
                "service returned {} {:?} rows, expected {expected_rows} {:?} rows",
                matrix.n(),
                matrix.kind,
                kind
            )));
        }
        Ok(matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock_music_synthesize;
    use crate::metrics::softmax;

    #[test]
    fn file_round_trip() {
        let m = EmbeddingMatrix::new(vec![1.0, 2.5, -3.0, 0.25, 8.0, 1e-3], 3, 10.0, "tag", EmbeddingKind::Logits).unwrap();
        let bytes = m.to_bytes();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..header_end]).unwrap();
        assert_eq!(header["d"], 3);
        assert_eq!(header["n"], 2);
        assert_eq!(header["kind"], "logits");
        assert_eq!(bytes.len(), header_end + 1 + 6 * 4);
        let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        assert_eq!(back.n(), 2);
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_body_rejected() {
        let m = EmbeddingMatrix::new(vec![1.0; 4], 2, 10.0, "t", EmbeddingKind::Embedding).unwrap();
        let mut bytes = m.to_bytes();
        bytes.pop();
        assert!(matches!(EmbeddingMatrix::from_bytes(&bytes), Err(MetricsError::MalformedEmbedding(_))));
        assert!(EmbeddingMatrix::from_bytes(b"no header").is_err());
    }

    #[test]
    fn spectral_shape_contract() {
        let rate = 8000;
        let audio = mock_music_synthesize("shape", 0, 90.0, rate);
        let e = SpectralEmbedder::new();
        assert_eq!(e.embed(&audio.samples, rate, 10.0, EmbeddingKind::Logits).unwrap().n(), 9);
        assert_eq!(e.embed(&audio.samples, rate, 30.0, EmbeddingKind::Embedding).unwrap().n(), 3);
        // partial trailing window is dropped
        assert_eq!(e.embed(&audio.samples[..rate as usize * 25], rate, 10.0, EmbeddingKind::Logits).unwrap().n(), 2);
        assert!(matches!(
            e.embed(&audio.samples[..rate as usize * 9], rate, 10.0, EmbeddingKind::Logits),
            Err(MetricsError::AudioTooShort { .. })
        ));
    }

    #[test]
    fn spectral_logits_track_tone_content() {
        let rate = 16_000;
        let e = SpectralEmbedder::new();
        let a = mock_music_synthesize("storm at sea", 1, 10.0, rate);
        let b = mock_music_synthesize("storm at sea", 2, 10.0, rate);
        let c = mock_music_synthesize("quiet library", 1, 10.0, rate);
        let row = |s: &[f32]| e.embed(s, rate, 10.0, EmbeddingKind::Logits).unwrap().row(0).to_vec();
        let (pa, pb, pc) = (softmax(&row(&a.samples)), softmax(&row(&b.samples)), softmax(&row(&c.samples)));
        let same = crate::metrics::kld(&pa, &pb).unwrap();
        let diff = crate::metrics::kld(&pa, &pc).unwrap();
        assert!(same < 0.05, "{same}");
        assert!(diff > 10.0 * same.max(1e-3), "{diff} vs {same}");
        for r in [&pa, &pc] {
            assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn slicing_and_stacking() {
        let m = EmbeddingMatrix::new((0..10).map(f64::from).collect(), 2, 10.0, "t", EmbeddingKind::Embedding).unwrap();
        assert_eq!(m.slice_rows(1, 3).values(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m.slice_rows(4, 99).n(), 1);
        let both = EmbeddingMatrix::concat(&[m.slice_rows(0, 1), m.slice_rows(4, 5)]).unwrap();
        assert_eq!(both.values(), &[0.0, 1.0, 8.0, 9.0]);
        let other = EmbeddingMatrix::new(vec![0.0, 0.0], 2, 10.0, "u", EmbeddingKind::Embedding).unwrap();
        assert!(matches!(EmbeddingMatrix::concat(&[m, other]), Err(MetricsError::SourceMismatch { .. })));
    }
}
