//! Segment concatenation, transition bookkeeping and WAV file I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 32_000;
pub const DEFAULT_HALF_WINDOW_S: f64 = 10.0;

const PCM_SCALE: f32 = i16::MAX as f32;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("segment {index} has sample rate {found} Hz, expected {expected} Hz")]
    SampleRateMismatch { index: usize, expected: u32, found: u32 },
    #[error("segment indices must be contiguous from 0; position {position} holds index {found}")]
    NonContiguousIndices { position: usize, found: usize },
    #[error("no segments to assemble")]
    NoSegments,
    #[error("crossfade of {crossfade_samples} samples does not fit segment {index} ({len} samples)")]
    CrossfadeTooLong { index: usize, crossfade_samples: usize, len: usize },
    #[error("transition at {t} s: window [{start} s, {end} s) is outside the track (0 s to {duration} s)")]
    WindowOutOfBounds { t: f64, start: f64, end: f64, duration: f64 },
    #[error("{t} s is not a recorded transition of this track")]
    NotATransition { t: f64 },
    #[error("unsupported WAV layout: {0}")]
    UnsupportedWavLayout(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for AssemblyError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => AssemblyError::Io(io),
            other => AssemblyError::UnsupportedWavLayout(other.to_string()),
        }
    }
}

/// Mono audio generated for one transcript window.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub index: usize,
}

impl AudioSegment {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// The trailing `seconds` of audio, or the whole segment if it is shorter.
    pub fn tail(&self, seconds: f64) -> AudioSegment {
        let n = seconds_to_samples(seconds, self.sample_rate_hz).min(self.samples.len());
        AudioSegment {
            samples: self.samples[self.samples.len() - n..].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            index: self.index,
        }
    }
}

/// An assembled soundtrack and the instants where one segment hands over to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub transitions: Vec<f64>,
}

impl Track {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Sample-accurate slice `[start_s, end_s)`, clamped to the track.
    pub fn slice(&self, start_s: f64, end_s: f64) -> &[f32] {
        let start = seconds_to_samples(start_s, self.sample_rate_hz).min(self.samples.len());
        let end = seconds_to_samples(end_s, self.sample_rate_hz).clamp(start, self.samples.len());
        &self.samples[start..end]
    }
}

pub fn seconds_to_samples(seconds: f64, sample_rate_hz: u32) -> usize {
    (seconds * sample_rate_hz as f64).round().max(0.0) as usize
}

/// Concatenates segments in order.
///
/// With a non-zero crossfade each pair of neighbours overlaps by that span and
/// is mixed with complementary linear gains, so the mix never leaves the range
/// of its inputs. Each transition is recorded at the middle of its overlap,
/// which is the plain segment boundary when no crossfade is applied.
pub fn assemble(segments: &[AudioSegment], crossfade_ms: u32) -> Result<Track, AssemblyError> {
    let first = segments.first().ok_or(AssemblyError::NoSegments)?;
    let rate = first.sample_rate_hz;
    for (position, seg) in segments.iter().enumerate() {
        if seg.index != position {
            return Err(AssemblyError::NonContiguousIndices { position, found: seg.index });
        }
        if seg.sample_rate_hz != rate {
            return Err(AssemblyError::SampleRateMismatch {
                index: seg.index,
                expected: rate,
                found: seg.sample_rate_hz,
            });
        }
    }
    let fade = seconds_to_samples(crossfade_ms as f64 / 1000.0, rate);
    if fade > 0 {
        for seg in segments {
            if seg.samples.len() <= fade {
                return Err(AssemblyError::CrossfadeTooLong {
                    index: seg.index,
                    crossfade_samples: fade,
                    len: seg.samples.len(),
                });
            }
        }
    }

    let total: usize = segments.iter().map(|s| s.samples.len()).sum::<usize>() - fade * (segments.len() - 1);
    let mut samples = Vec::with_capacity(total);
    let mut transitions = Vec::with_capacity(segments.len() - 1);
    for seg in segments {
        if samples.is_empty() {
            samples.extend_from_slice(&seg.samples);
            continue;
        }
        let overlap_start = samples.len() - fade;
        transitions.push((overlap_start as f64 + fade as f64 / 2.0) / rate as f64);
        for k in 0..fade {
            let gain_in = (k as f32 + 0.5) / fade as f32;
            let mixed = samples[overlap_start + k] * (1.0 - gain_in) + seg.samples[k] * gain_in;
            samples[overlap_start + k] = mixed;
        }
        samples.extend_from_slice(&seg.samples[fade..]);
    }
    debug_assert_eq!(samples.len(), total);
    Ok(Track { samples, sample_rate_hz: rate, transitions })
}

/// Audio immediately before and after a transition.
pub fn extract_transition_windows(
    track: &Track,
    t: f64,
    half_window_s: f64,
) -> Result<(AudioSegment, AudioSegment), AssemblyError> {
    let ordinal = track
        .transitions
        .iter()
        .position(|&x| (x - t).abs() < 1e-9)
        .ok_or(AssemblyError::NotATransition { t })?;
    let rate = track.sample_rate_hz;
    let center = seconds_to_samples(t, rate);
    let half = seconds_to_samples(half_window_s, rate);
    if center < half || center + half > track.samples.len() {
        return Err(AssemblyError::WindowOutOfBounds {
            t,
            start: t - half_window_s,
            end: t + half_window_s,
            duration: track.duration_s(),
        });
    }
    let before = AudioSegment {
        samples: track.samples[center - half..center].to_vec(),
        sample_rate_hz: rate,
        index: ordinal,
    };
    let after = AudioSegment {
        samples: track.samples[center..center + half].to_vec(),
        sample_rate_hz: rate,
        index: ordinal,
    };
    Ok((before, after))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTransition {
    pub t: f64,
    pub reason: String,
}

pub struct TransitionWindow {
    pub t: f64,
    pub before: AudioSegment,
    pub after: AudioSegment,
}

/// Extracts windows around every transition that lies inside `[lo_s, hi_s]`,
/// skipping (and reporting) the ones whose windows would leave that range.
pub fn transition_windows_within(
    track: &Track,
    half_window_s: f64,
    lo_s: f64,
    hi_s: f64,
) -> (Vec<TransitionWindow>, Vec<SkippedTransition>) {
    let mut windows = Vec::new();
    let mut skipped = Vec::new();
    for &t in &track.transitions {
        if t <= lo_s || t >= hi_s {
            continue;
        }
        if t - half_window_s < lo_s - 1e-9 || t + half_window_s > hi_s + 1e-9 {
            skipped.push(SkippedTransition {
                t,
                reason: format!(
                    "window [{:.3}, {:.3}) leaves the evaluated span [{lo_s:.3}, {hi_s:.3})",
                    t - half_window_s,
                    t + half_window_s
                ),
            });
            continue;
        }
        match extract_transition_windows(track, t, half_window_s) {
            Ok((before, after)) => windows.push(TransitionWindow { t, before, after }),
            Err(e) => skipped.push(SkippedTransition { t, reason: e.to_string() }),
        }
    }
    (windows, skipped)
}

/// Mono audio read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    /// Channel count of the file before downmixing.
    pub source_channels: u16,
}

impl WavAudio {
    pub fn into_track(self, transitions: Vec<f64>) -> Track {
        Track { samples: self.samples, sample_rate_hz: self.sample_rate_hz, transitions }
    }
}

pub fn quantize(sample: f32) -> i16 {
    (sample.clamp(-1.0, 1.0) * PCM_SCALE).round() as i16
}

pub fn dequantize(sample: i16) -> f32 {
    (sample as f32 / PCM_SCALE).max(-1.0)
}

pub fn write_wav(samples: &[f32], sample_rate_hz: u32, path: &Path) -> Result<(), AssemblyError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    {
        let mut w = writer.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w.write_sample(quantize(s));
        }
        w.flush()?;
    }
    writer.finalize()?;
    Ok(())
}

/// Reads integer PCM (8–32 bit) or 32-bit float WAV. Multi-channel input is
/// averaged down to mono.
pub fn read_wav(path: &Path) -> Result<WavAudio, AssemblyError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int if spec.bits_per_sample == 16 => reader
            .samples::<i16>()
            .map(|s| s.map(dequantize))
            .collect::<Result<_, _>>()?,
        hound::SampleFormat::Int if spec.bits_per_sample <= 32 => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f32 / scale).clamp(-1.0, 1.0)))
                .collect::<Result<_, _>>()?
        }
        hound::SampleFormat::Float if spec.bits_per_sample == 32 => {
            reader.samples::<f32>().collect::<Result<_, _>>()?
        }
        _ => {
            return Err(AssemblyError::UnsupportedWavLayout(format!(
                "{:?} samples at {} bits",
                spec.sample_format, spec.bits_per_sample
            )))
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        log::info!("{}: downmixing {channels} channels to mono by averaging", path.display());
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok(WavAudio { samples, sample_rate_hz: spec.sample_rate, source_channels: spec.channels })
}
