use std::path::Path;

use super::config::{EmbeddingSource, RunConfig};
use super::manifest::RunManifest;
use super::PipelineError;
use crate::assembler::{read_wav, transition_windows_within, Track, TransitionWindow};
use crate::metrics::{
    fad_score, render_report, sample_eval_window, story_alignment, transition_smoothness, ClassProbabilities,
    Embedder, EmbeddingKind, EmbeddingMatrix, EvalWindow, HttpEmbedder, MetricOutcome, MetricReport,
    MetricsError, ReportSettings, SpectralEmbedder,
};

pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

pub fn make_embedder(source: &EmbeddingSource) -> Result<Box<dyn Embedder>, PipelineError> {
    Ok(match source {
        EmbeddingSource::Mock => Box::new(SpectralEmbedder::new()),
        EmbeddingSource::Http(cfg) => Box::new(HttpEmbedder::new(cfg.clone())?),
    })
}

/// Errors that mean "not enough data for this metric" rather than a fault.
fn skip_or_fail<T>(r: Result<T, MetricsError>) -> Result<MetricOutcome<T>, PipelineError> {
    match r {
        Ok(value) => Ok(MetricOutcome::Ok { value }),
        Err(
            e @ (MetricsError::TooFewSamples { .. }
            | MetricsError::AudioTooShort { .. }
            | MetricsError::NoPairs
            | MetricsError::NoValidTransitions),
        ) => Ok(MetricOutcome::skipped(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn is_embedding_file(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("emb"))
}

fn corpus_embeddings(path: &Path, embedder: &dyn Embedder, span_s: f64) -> Result<EmbeddingMatrix, PipelineError> {
    let expected = embedder.source_tag(EmbeddingKind::Embedding);
    if is_embedding_file(path) {
        let m = EmbeddingMatrix::read(path)?;
        if m.kind != EmbeddingKind::Embedding || m.source_tag != expected {
            return Err(MetricsError::SourceMismatch {
                expected: format!("{expected} embedding"),
                found: format!("{} {:?}", m.source_tag, m.kind),
            }
            .into());
        }
        return Ok(m);
    }
    let wav = read_wav(path)?;
    Ok(embedder.embed(&wav.samples, wav.sample_rate_hz, span_s, EmbeddingKind::Embedding)?)
}

fn to_probabilities(m: &EmbeddingMatrix, cfg: &RunConfig) -> Vec<ClassProbabilities> {
    m.rows().map(|r| cfg.eval.probability_mapping.apply(r)).collect()
}

/// Hand-over instants assumed when no manifest is available: every window boundary.
pub fn nominal_transitions(duration_s: f64, window_s: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = window_s;
    while t < duration_s - 1e-9 {
        out.push(t);
        t += window_s;
    }
    out
}

/// Evaluates a generated soundtrack.
///
/// The campaign, strategy and transition instants come from `manifest` when
/// given, otherwise from `cfg` and the window length. Metrics whose reference
/// is missing are reported as skipped.
pub fn run_eval(cfg: &RunConfig, track_path: &Path, manifest: Option<&RunManifest>) -> Result<MetricReport, PipelineError> {
    cfg.validate_for_eval()?;
    let embedder = make_embedder(&cfg.embedding_source)?;
    let embedder = embedder.as_ref();
    let e = &cfg.eval;

    let wav = read_wav(track_path)?;
    let transitions = match manifest {
        Some(m) => m.transitions.clone(),
        None => nominal_transitions(wav.samples.len() as f64 / wav.sample_rate_hz as f64, cfg.window_s),
    };
    let generated = wav.into_track(transitions);
    let reference: Option<Track> = match &cfg.reference_audio_path {
        Some(p) => Some(read_wav(p)?.into_track(Vec::new())),
        None => None,
    };

    let common_s = reference.as_ref().map_or(generated.duration_s(), |r| r.duration_s().min(generated.duration_s()));
    let window = match sample_eval_window(common_s, e.window_minutes, cfg.seed) {
        Ok(offset_s) => EvalWindow { offset_s, length_s: e.window_minutes * 60.0, full_track_fallback: false, note: None },
        Err(MetricsError::TrackTooShort { duration_s, window_s }) => EvalWindow {
            offset_s: 0.0,
            length_s: duration_s,
            full_track_fallback: true,
            note: Some(format!("{duration_s:.3} s of audio is shorter than the {window_s:.0} s window; the whole track was used")),
        },
        Err(err) => return Err(err.into()),
    };
    let (lo, hi) = (window.offset_s, window.offset_s + window.length_s);
    let crop = |t: &Track| t.slice(lo, hi).to_vec();
    let generated_crop = crop(&generated);
    let reference_crop = reference.as_ref().map(crop);
    let rate = generated.sample_rate_hz;
    let ref_rate = reference.as_ref().map_or(rate, |r| r.sample_rate_hz);

    let (fad, human_fad) = match &cfg.reference_corpus_path {
        None => (MetricOutcome::skipped("no reference corpus"), MetricOutcome::skipped("no reference corpus")),
        Some(path) => {
            let corpus = corpus_embeddings(path, embedder, e.fad_segment_s)?;
            let score = |samples: &[f32], rate: u32| -> Result<MetricOutcome<f64>, PipelineError> {
                skip_or_fail(
                    embedder
                        .embed(samples, rate, e.fad_segment_s, EmbeddingKind::Embedding)
                        .and_then(|m| fad_score(&corpus, &m)),
                )
            };
            let human = match &reference_crop {
                Some(r) => score(r, ref_rate)?,
                None => MetricOutcome::skipped("no reference campaign audio"),
            };
            (score(&generated_crop, rate)?, human)
        }
    };

    let story = match &reference_crop {
        None => MetricOutcome::skipped("no reference campaign audio"),
        Some(r) => {
            let logits = |s: &[f32], rate| embedder.embed(s, rate, e.kld_segment_s, EmbeddingKind::Logits);
            skip_or_fail(logits(r, ref_rate).and_then(|ref_m| {
                let gen_m = logits(&generated_crop, rate)?;
                let n = ref_m.n().min(gen_m.n());
                story_alignment(
                    &to_probabilities(&ref_m.slice_rows(0, n), cfg),
                    &to_probabilities(&gen_m.slice_rows(0, n), cfg),
                    e.kld_direction,
                )
            }))?
        }
    };

    let (windows, skipped_transitions) = transition_windows_within(&generated, e.transition_half_window_s, lo, hi);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = windows.len().div_ceil(workers).max(1);
    let embed_pair = |w: &TransitionWindow| -> Result<_, MetricsError> {
        let one = |s: &[f32]| -> Result<ClassProbabilities, MetricsError> {
            let m = embedder.embed(s, rate, e.transition_half_window_s, EmbeddingKind::Logits)?;
            Ok(e.probability_mapping.apply(m.row(0)))
        };
        Ok((one(&w.before.samples)?, one(&w.after.samples)?))
    };
    // Chunks are joined in order, so the reduction below sees transitions in timeline order.
    let pairs = std::thread::scope(|scope| {
        let handles: Vec<_> = windows
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(embed_pair).collect::<Result<Vec<_>, _>>()))
            .collect();
        let mut all = Vec::with_capacity(windows.len());
        for h in handles {
            all.extend(h.join().expect("embedding worker panicked")?);
        }
        Ok::<_, MetricsError>(all)
    })?;
    let smoothness = if windows.is_empty() {
        MetricOutcome::skipped(if generated.transitions.is_empty() {
            "track has no transitions".to_string()
        } else {
            "no transition has a full window inside the evaluated span".to_string()
        })
    } else {
        skip_or_fail(transition_smoothness(&pairs, e.kld_direction))?
    };

    let (campaign, strategy) = match manifest {
        Some(m) => (m.config.campaign_name.clone(), m.config.strategy),
        None => (cfg.campaign_name.clone(), cfg.strategy),
    };
    Ok(MetricReport {
        campaign,
        strategy,
        generated_track: track_path.display().to_string(),
        eval_window: window,
        settings: ReportSettings {
            kld_direction: e.kld_direction,
            probability_mapping: e.probability_mapping,
            std_normalization: "population".into(),
            fad_segment_s: e.fad_segment_s,
            kld_segment_s: e.kld_segment_s,
            transition_half_window_s: e.transition_half_window_s,
            eval_window_minutes: e.window_minutes,
            seed: cfg.seed,
        },
        fad_source_tag: Some(embedder.source_tag(EmbeddingKind::Embedding)),
        kld_source_tag: Some(embedder.source_tag(EmbeddingKind::Logits)),
        fad,
        human_fad,
        story_alignment: story,
        transition_smoothness: smoothness,
        skipped_transitions,
    })
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report(report: &MetricReport, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let json = dir.join(REPORT_JSON_FILE);
    std::fs::write(&json, serde_json::to_string_pretty(report).expect("report serializes"))
        .map_err(|e| PipelineError::io(&json, e))?;
    let text = dir.join(REPORT_TEXT_FILE);
    std::fs::write(&text, render_report(report)).map_err(|e| PipelineError::io(&text, e))
}

/// Loads a report from a report file or from a manifest that carries one.
pub fn load_report(path: &Path) -> Result<MetricReport, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    if let Ok(r) = serde_json::from_slice::<MetricReport>(&bytes) {
        return Ok(r);
    }
    serde_json::from_slice::<RunManifest>(&bytes)
        .ok()
        .and_then(|m| m.metrics)
        .ok_or_else(|| PipelineError::Config(format!("{} holds neither a report nor a manifest with metrics", path.display())))
}
