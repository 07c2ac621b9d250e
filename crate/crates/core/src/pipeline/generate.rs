use std::path::Path;
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use super::cache::{CachedLlm, CachedMusic, CallRecord, ResponseCache};
use super::config::RunConfig;
use super::manifest::{
    ArtifactRecord, RunManifest, RunStatus, SegmentRecord, Timings, MANIFEST_FILE, SEGMENTS_FILE, TRACK_FILE,
};
use super::PipelineError;
use crate::assembler::{assemble, write_wav, AudioSegment};
use crate::director::{Director, LlmOptions, MusicDescription};
use crate::gateway::{
    music_generate, GatewayError, HttpLlm, HttpMusic, LlmBackend, LlmRequest, MockLlm, MockMusic, MusicBackend,
    MusicRequest, PREVIOUS_TAIL_S,
};
use crate::hashing::{samples_to_le_bytes, sha256_hex, stable_hash64};
use crate::ingest::{padded_duration, parse_subtitles, window_transcripts, SubtitleFormat, TranscriptSegment};

/// How many descriptions the director may run ahead of audio rendering.
const DESCRIPTION_LOOKAHEAD: usize = 2;

/// Stand-in for a language model that the chosen strategy never calls.
struct NoLlm;

impl LlmBackend for NoLlm {
    fn complete(&self, _req: &LlmRequest) -> Result<String, GatewayError> {
        Err(GatewayError::InvalidRequest("no LLM backend configured".into()))
    }
}

fn llm_backend(cfg: &RunConfig) -> Result<(Box<dyn LlmBackend>, String), PipelineError> {
    if cfg.mock_llm {
        let rules: Vec<(String, String)> =
            cfg.mock_llm_rules.iter().map(|r| (r.needle.clone(), r.reply.clone())).collect();
        let id = format!("mock-llm:{:016x}", stable_hash64(&serde_json::to_vec(&rules).expect("rules serialize")));
        return Ok((Box::new(MockLlm::with_rules(rules)), id));
    }
    match &cfg.llm_backend {
        Some(b) => Ok((Box::new(HttpLlm::new(b.clone()).map_err(config_error)?), b.endpoint_url.clone())),
        None => Ok((Box::new(NoLlm), "none".into())),
    }
}

fn music_backend(cfg: &RunConfig) -> Result<(Box<dyn MusicBackend>, String), PipelineError> {
    if cfg.mock_music {
        return Ok((Box::new(MockMusic), "mock-music".into()));
    }
    let b = cfg.music_backend.as_ref().ok_or_else(|| PipelineError::Config("no music backend configured".into()))?;
    Ok((Box::new(HttpMusic::new(b.clone()).map_err(config_error)?), b.endpoint_url.clone()))
}

fn config_error(e: GatewayError) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Reads and windows the configured transcript.
pub fn load_segments(cfg: &RunConfig) -> Result<Vec<TranscriptSegment>, PipelineError> {
    let path = cfg.transcript_path.as_ref().ok_or_else(|| PipelineError::Config("transcript_path is required".into()))?;
    let format = SubtitleFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let cues = parse_subtitles(&bytes, format)?;
    let total = cfg.total_duration_s.unwrap_or_else(|| padded_duration(&cues, cfg.window_s));
    Ok(window_transcripts(&cues, cfg.window_s, total, &cfg.language_tag)?)
}

struct Described {
    segment: TranscriptSegment,
    result: Result<MusicDescription, GatewayError>,
    calls: Vec<CallRecord>,
    describe_ms: f64,
}

fn artifact(name: &str, dir: &Path, file: &str) -> Result<ArtifactRecord, PipelineError> {
    let path = dir.join(file);
    let bytes = std::fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
    Ok(ArtifactRecord { name: name.into(), file: file.into(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Runs transcript → descriptions → audio → soundtrack and writes the WAV,
/// the windowed transcript and the manifest into `cfg.output_dir`.
///
/// Descriptions are produced on a worker thread up to two segments ahead;
/// audio is rendered strictly in order because each segment continues from
/// the tail of the previous one. The first backend failure stops the run and
/// leaves a manifest marked incomplete.
pub fn run_generate(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate_for_generate()?;
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;

    let segments = load_segments(cfg)?;
    let cache = if cfg.use_cache {
        Some(ResponseCache::open(cfg.cache_dir()).map_err(|e| PipelineError::io(&cfg.cache_dir(), e))?)
    } else {
        None
    };
    let (llm, llm_id) = llm_backend(cfg)?;
    let (music, music_id) = music_backend(cfg)?;
    let llm = CachedLlm::new(llm, cache.clone(), llm_id);
    let music = CachedMusic::new(music, cache, music_id);
    let opts = LlmOptions { temperature: cfg.temperature, seed: Some(cfg.seed), context_limit: cfg.context_limit };

    let segments_text = serde_json::to_string_pretty(&segments).expect("segments serialize");
    std::fs::write(out.join(SEGMENTS_FILE), segments_text).map_err(|e| PipelineError::io(&out.join(SEGMENTS_FILE), e))?;

    let mut manifest = RunManifest {
        status: RunStatus::Incomplete,
        error: None,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        transcript_segment_count: segments.len(),
        segments: Vec::with_capacity(segments.len()),
        transitions: Vec::new(),
        track_duration_s: None,
        artifacts: Vec::new(),
        timings: Timings { started_unix_ms, ..Timings::default() },
        metrics: None,
    };
    let mut audio: Vec<AudioSegment> = Vec::with_capacity(segments.len());

    let failure = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<Described>(DESCRIPTION_LOOKAHEAD);
        let llm = &llm;
        let segments = &segments;
        scope.spawn(move || {
            let mut director = Director::new(cfg.strategy, opts);
            for s in segments {
                let t = Instant::now();
                let result = director.describe(s, llm);
                let failed = result.is_err();
                let msg = Described { segment: s.clone(), result, calls: llm.drain_calls(), describe_ms: elapsed_ms(t) };
                if tx.send(msg).is_err() || failed {
                    break;
                }
            }
        });

        for d in rx {
            manifest.timings.describe_ms += d.describe_ms;
            let description = match d.result {
                Ok(desc) => desc,
                Err(e) => return Some(format!("description of segment {} failed: {e}", d.segment.index)),
            };
            log::info!("segment {}: {}", d.segment.index, description.text);
            let request = MusicRequest {
                description: description.text.clone(),
                previous_audio_tail: audio.last().map(|a| a.tail(PREVIOUS_TAIL_S)),
                duration_s: d.segment.duration_s(),
                sample_rate_hz: cfg.sample_rate_hz,
            };
            let t = Instant::now();
            let rendered = music_generate(&music, &request);
            let render_ms = elapsed_ms(t);
            manifest.timings.render_ms += render_ms;
            let mut segment_audio = match rendered {
                Ok(a) => a,
                Err(e) => return Some(format!("audio for segment {} failed: {e}", d.segment.index)),
            };
            segment_audio.index = d.segment.index;
            let music_call = music.drain_calls().pop().expect("one music call per segment");
            manifest.segments.push(SegmentRecord {
                index: d.segment.index,
                window_start_s: d.segment.window_start_s,
                window_end_s: d.segment.window_end_s,
                transcript_text: d.segment.text,
                description,
                audio_samples: segment_audio.samples.len(),
                audio_sha256: sha256_hex(&samples_to_le_bytes(&segment_audio.samples)),
                llm_calls: d.calls,
                music_call,
                describe_ms: d.describe_ms,
                render_ms,
            });
            audio.push(segment_audio);
        }
        None
    });

    let manifest_path = out.join(MANIFEST_FILE);
    if let Some(reason) = failure {
        log::error!("{reason}");
        manifest.error = Some(reason.clone());
        manifest.timings.total_ms = elapsed_ms(started);
        manifest.write(&manifest_path)?;
        return Err(PipelineError::Incomplete { manifest_path, reason });
    }

    let t = Instant::now();
    let track = assemble(&audio, cfg.crossfade_ms)?;
    write_wav(&track.samples, track.sample_rate_hz, &out.join(TRACK_FILE))?;
    manifest.timings.assemble_ms = elapsed_ms(t);
    manifest.transitions = track.transitions.clone();
    manifest.track_duration_s = Some(track.duration_s());
    manifest.artifacts = vec![artifact("soundtrack", out, TRACK_FILE)?, artifact("transcript_segments", out, SEGMENTS_FILE)?];
    manifest.status = RunStatus::Complete;
    manifest.timings.total_ms = elapsed_ms(started);
    manifest.write(&manifest_path)?;
    log::info!(
        "wrote {} ({:.1} s, {} segments, {} cache hits)",
        out.join(TRACK_FILE).display(),
        track.duration_s(),
        manifest.segments.len(),
        manifest.cache_hits()
    );
    Ok(manifest)
}
