//! Subtitle ingestion and fixed-length transcript windowing.
//!
//! Three input formats are accepted: WebVTT, SRT and a plain JSON array of
//! `{start_s, end_s, text}` objects. Parsed cues are sliced into contiguous
//! windows (30 s by default) whose text feeds the description strategies.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW_S: f64 = 30.0;
pub const DEFAULT_LANGUAGE_TAG: &str = "und";

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("unsupported subtitle format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed timestamp on line {line}: {reason}")]
    MalformedTimestamp { line: usize, reason: String },
    #[error("malformed cue on line {line}: {reason}")]
    MalformedCue { line: usize, reason: String },
    #[error("subtitle file contains no cues")]
    EmptyFile,
    #[error("subtitle file is not valid UTF-8")]
    InvalidUtf8,
    #[error("invalid window configuration: {0}")]
    InvalidWindow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubtitleFormat {
    WebVtt,
    Srt,
    Json,
}

impl SubtitleFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl FromStr for SubtitleFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vtt" | "webvtt" => Ok(Self::WebVtt),
            "srt" => Ok(Self::Srt),
            "json" => Ok(Self::Json),
            other => Err(IngestError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// One timed caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// A fixed-length slice of the session timeline with the speech heard in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub index: usize,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub text: String,
    pub language_tag: String,
}

impl TranscriptSegment {
    pub fn duration_s(&self) -> f64 {
        self.window_end_s - self.window_start_s
    }
}

pub fn parse_subtitles(bytes: &[u8], format: SubtitleFormat) -> Result<Vec<Cue>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::InvalidUtf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut cues = match format {
        SubtitleFormat::Srt => parse_srt(text)?,
        SubtitleFormat::WebVtt => parse_vtt(text)?,
        SubtitleFormat::Json => parse_json(text)?,
    };
    if cues.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    cues.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(cues)
}

/// Parses a timestamp of the form `[HH:]MM:SS(.|,)mmm` into whole milliseconds.
fn parse_timestamp_ms(raw: &str, line: usize) -> Result<u64, IngestError> {
    let bad = |reason: &str| IngestError::MalformedTimestamp {
        line,
        reason: format!("{reason}: {raw:?}"),
    };
    let raw = raw.trim();
    let (clock, millis) = raw
        .rsplit_once(['.', ','])
        .ok_or_else(|| bad("missing milliseconds"))?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad("milliseconds must be three digits"));
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let (h, m, s) = match parts.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] => ("0", *m, *s),
        _ => return Err(bad("expected [HH:]MM:SS")),
    };
    let field = |v: &str| -> Result<u64, IngestError> {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("non-numeric field"));
        }
        v.parse().map_err(|_| bad("field out of range"))
    };
    let (h, m, s, ms) = (field(h)?, field(m)?, field(s)?, field(millis)?);
    if m >= 60 || s >= 60 {
        return Err(bad("minutes and seconds must be below 60"));
    }
    Ok(((h * 60 + m) * 60 + s) * 1000 + ms)
}

fn ms_to_s(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

fn s_to_ms(s: f64) -> u64 {
    (s * 1000.0).round().max(0.0) as u64
}

/// Parses `start --> end [settings]`.
fn parse_timing_line(line: &str, line_no: usize) -> Result<(f64, f64), IngestError> {
    let (start, rest) = line
        .split_once("-->")
        .ok_or_else(|| IngestError::MalformedTimestamp {
            line: line_no,
            reason: "missing '-->'".into(),
        })?;
    let end = rest.split_whitespace().next().unwrap_or_default();
    let start_ms = parse_timestamp_ms(start, line_no)?;
    let end_ms = parse_timestamp_ms(end, line_no)?;
    if end_ms <= start_ms {
        return Err(IngestError::MalformedTimestamp {
            line: line_no,
            reason: format!("cue ends at or before it starts ({start_ms} ms → {end_ms} ms)"),
        });
    }
    Ok((ms_to_s(start_ms), ms_to_s(end_ms)))
}

/// Removes inline markup such as `<v Speaker>`, `<i>` or `<00:00:01.000>`.
fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    for c in text.chars() {
        match c {
            '<' => depth += 1,
            '>' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out
}

fn join_cue_lines(lines: &[&str]) -> String {
    lines
        .iter()
        .map(|l| strip_markup(l))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn make_cue(start_s: f64, end_s: f64, lines: &[&str], line_no: usize) -> Result<Cue, IngestError> {
    let text = join_cue_lines(lines);
    if text.is_empty() {
        return Err(IngestError::MalformedCue {
            line: line_no,
            reason: "cue has no text".into(),
        });
    }
    Ok(Cue { start_s, end_s, text })
}

/// Splits the document into blank-line separated blocks, keeping 1-based line numbers.
fn blocks(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn parse_srt(text: &str) -> Result<Vec<Cue>, IngestError> {
    let mut cues = Vec::new();
    for block in blocks(text) {
        // The numeric counter line is optional in practice.
        let timing_pos = block
            .iter()
            .position(|(_, l)| l.contains("-->"))
            .ok_or_else(|| IngestError::MalformedCue {
                line: block[0].0,
                reason: "block has no timing line".into(),
            })?;
        if timing_pos > 1 {
            return Err(IngestError::MalformedCue {
                line: block[0].0,
                reason: "unexpected lines before timing line".into(),
            });
        }
        let (line_no, timing) = block[timing_pos];
        let (start, end) = parse_timing_line(timing, line_no)?;
        let lines: Vec<&str> = block[timing_pos + 1..].iter().map(|(_, l)| *l).collect();
        cues.push(make_cue(start, end, &lines, line_no)?);
    }
    Ok(cues)
}

fn parse_vtt(text: &str) -> Result<Vec<Cue>, IngestError> {
    let all = blocks(text);
    let mut iter = all.into_iter();
    let header = iter.next().ok_or(IngestError::EmptyFile)?;
    if !header[0].1.trim_start().starts_with("WEBVTT") {
        return Err(IngestError::UnsupportedFormat(
            "WebVTT input must start with a WEBVTT header".into(),
        ));
    }
    let mut cues = Vec::new();
    // Some writers put the first cue directly under the header without a blank line.
    let header_cue: Vec<(usize, &str)> = header
        .iter()
        .skip_while(|(_, l)| !l.contains("-->"))
        .copied()
        .collect();
    let rest = std::iter::once(header_cue).chain(iter);
    for block in rest {
        let Some(&(first_no, first)) = block.first() else { continue };
        let keyword = first.split_whitespace().next().unwrap_or_default();
        if matches!(keyword, "NOTE" | "STYLE" | "REGION") {
            continue;
        }
        let timing_pos = block
            .iter()
            .position(|(_, l)| l.contains("-->"))
            .ok_or_else(|| IngestError::MalformedCue {
                line: first_no,
                reason: "block has no timing line".into(),
            })?;
        if timing_pos > 1 {
            return Err(IngestError::MalformedCue {
                line: first_no,
                reason: "unexpected lines before timing line".into(),
            });
        }
        let (line_no, timing) = block[timing_pos];
        let (start, end) = parse_timing_line(timing, line_no)?;
        let lines: Vec<&str> = block[timing_pos + 1..].iter().map(|(_, l)| *l).collect();
        cues.push(make_cue(start, end, &lines, line_no)?);
    }
    Ok(cues)
}

fn parse_json(text: &str) -> Result<Vec<Cue>, IngestError> {
    let raw: Vec<Cue> = serde_json::from_str(text).map_err(|e| IngestError::MalformedCue {
        line: e.line(),
        reason: e.to_string(),
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(i, cue)| {
            let entry = i + 1;
            if !cue.start_s.is_finite() || !cue.end_s.is_finite() || cue.start_s < 0.0 {
                return Err(IngestError::MalformedTimestamp {
                    line: entry,
                    reason: "times must be finite and non-negative".into(),
                });
            }
            if cue.end_s <= cue.start_s {
                return Err(IngestError::MalformedTimestamp {
                    line: entry,
                    reason: format!("cue ends at or before it starts ({} → {})", cue.start_s, cue.end_s),
                });
            }
            let text = cue.text.split_whitespace().collect::<Vec<_>>().join(" ");
            if text.is_empty() {
                return Err(IngestError::MalformedCue {
                    line: entry,
                    reason: "cue has no text".into(),
                });
            }
            Ok(Cue { text, ..cue })
        })
        .collect()
}

fn format_timestamp(s: f64, sep: char) -> String {
    let ms = s_to_ms(s);
    let (h, rem) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    format!("{h:02}:{m:02}:{:02}{sep}{:03}", rem / 1000, rem % 1000)
}

/// Writes cues back out in the requested format.
pub fn serialize_subtitles(cues: &[Cue], format: SubtitleFormat) -> String {
    let mut out = String::new();
    match format {
        SubtitleFormat::Srt => {
            for (i, cue) in cues.iter().enumerate() {
                let _ = write!(
                    out,
                    "{}\n{} --> {}\n{}\n\n",
                    i + 1,
                    format_timestamp(cue.start_s, ','),
                    format_timestamp(cue.end_s, ','),
                    cue.text
                );
            }
        }
        SubtitleFormat::WebVtt => {
            out.push_str("WEBVTT\n\n");
            for cue in cues {
                let _ = write!(
                    out,
                    "{} --> {}\n{}\n\n",
                    format_timestamp(cue.start_s, '.'),
                    format_timestamp(cue.end_s, '.'),
                    cue.text
                );
            }
        }
        SubtitleFormat::Json => {
            out = serde_json::to_string_pretty(cues).expect("cues serialize");
            out.push('\n');
        }
    }
    out
}

/// Slices the timeline `[0, total_duration_s)` into windows of `window_s`.
///
/// A cue contributes its text to every window its span intersects, so cues
/// straddling a boundary are repeated in both windows. Windows without speech
/// keep an empty text so the timeline stays aligned with the audio segments.
pub fn window_transcripts(
    cues: &[Cue],
    window_s: f64,
    total_duration_s: f64,
    language_tag: &str,
) -> Result<Vec<TranscriptSegment>, IngestError> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(IngestError::InvalidWindow(format!("window length must be positive, got {window_s}")));
    }
    if !(total_duration_s >= 0.0 && total_duration_s.is_finite()) {
        return Err(IngestError::InvalidWindow(format!(
            "total duration must be non-negative, got {total_duration_s}"
        )));
    }
    let max_end = cues.iter().map(|c| c.end_s).fold(0.0, f64::max);
    if max_end > total_duration_s {
        return Err(IngestError::InvalidWindow(format!(
            "total duration {total_duration_s} s is shorter than the last cue end {max_end} s"
        )));
    }
    let count = window_count(total_duration_s, window_s);
    let segments = (0..count)
        .map(|index| {
            let start = index as f64 * window_s;
            let end = if index + 1 == count {
                total_duration_s
            } else {
                (index + 1) as f64 * window_s
            };
            let text = cues
                .iter()
                .filter(|c| c.start_s < end && c.end_s > start)
                .map(|c| c.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            TranscriptSegment {
                index,
                window_start_s: start,
                window_end_s: end,
                text,
                language_tag: language_tag.to_string(),
            }
        })
        .collect();
    Ok(segments)
}

/// Number of windows needed to tile `total_s`; float noise below a microsecond
/// does not open an extra window.
fn window_count(total_s: f64, window_s: f64) -> usize {
    let ratio = total_s / window_s;
    let rounded = ratio.round();
    if (ratio - rounded).abs() * window_s < 1e-6 {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Session length rounded up to a whole number of windows.
pub fn padded_duration(cues: &[Cue], window_s: f64) -> f64 {
    let max_end = cues.iter().map(|c| c.end_s).fold(0.0, f64::max);
    window_count(max_end, window_s).max(1) as f64 * window_s
}
