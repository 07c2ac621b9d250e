//! Deterministic stand-ins for the language model and the music model.
//!
//! Every output is a pure function of the request, so runs against the mocks
//! are reproducible bit for bit.

use std::f64::consts::TAU;

use super::{GatewayError, LlmBackend, LlmRequest, MusicBackend, MusicRequest};
use crate::assembler::{seconds_to_samples, AudioSegment};
use crate::director::{CONTINUATION_PROMPT, EMOTION_PROMPT, SAME_SENTINEL};
use crate::hashing::stable_hash64;

const TONE_AMPLITUDE: f64 = 0.3;
const FADE_IN_S: f64 = 1.0;
const LOWEST_TONE_HZ: f64 = 110.0;
const TONE_OCTAVES: f64 = 4.0;
/// Samples copied from the end of the previous audio into the start of a continuation.
pub const CONTINUATION_SEED_SAMPLES: usize = 128;

/// Marker preceding the transcript text in the director's user messages.
pub const EXCERPT_MARKERS: [&str; 2] = ["Dialogue:", "Transcript excerpt:"];

/// Scripted language model.
///
/// Rules are `(needle, reply)` pairs checked in order against the transcript
/// excerpt of the last user message; the first needle contained in it wins.
/// Without a matching rule the mock answers with a keyword heuristic so that
/// every prompt kind gets a plausible reply.
#[derive(Debug, Clone, Default)]
pub struct MockLlm {
    rules: Vec<(String, String)>,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rules<I, K, V>(rules: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self { rules: rules.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }

    pub fn rule(mut self, needle: impl Into<String>, reply: impl Into<String>) -> Self {
        self.rules.push((needle.into(), reply.into()));
        self
    }

    fn reply(&self, req: &LlmRequest) -> String {
        let text = req.last_user_text();
        let excerpt = excerpt(text);
        if let Some((_, reply)) = self.rules.iter().find(|(needle, _)| excerpt.contains(needle.as_str())) {
            return reply.clone();
        }
        let mood = lexicon_mood(excerpt);
        if text.starts_with(EMOTION_PROMPT) {
            return format!("{mood}.");
        }
        if text.starts_with(CONTINUATION_PROMPT) && !signals_scene_change(excerpt) {
            return SAME_SENTINEL.to_string();
        }
        describe(mood, excerpt, req.seed.unwrap_or(0))
    }
}

impl LlmBackend for MockLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        req.validate()?;
        Ok(self.reply(req))
    }
}

fn excerpt(text: &str) -> &str {
    EXCERPT_MARKERS
        .iter()
        .filter_map(|m| text.rfind(m).map(|pos| text[pos + m.len()..].trim()))
        .next()
        .unwrap_or(text)
}

const LEXICON: [(&str, &[&str]); 3] = [
    ("Agitated", &["attack", "battle", "fight", "sword", "run", "dragon", "fire", "kill", "initiative"]),
    ("Suspenseful", &["dark", "shadow", "strange", "whisper", "hear", "door", "cave", "fog", "trap"]),
    ("Happy", &["laugh", "party", "celebrate", "tavern", "gold", "reward", "song", "feast"]),
];

fn lexicon_mood(excerpt: &str) -> &'static str {
    let lower = excerpt.to_lowercase();
    LEXICON
        .iter()
        .map(|(mood, words)| (mood, words.iter().filter(|w| lower.contains(*w)).count()))
        .filter(|(_, hits)| *hits > 0)
        .max_by_key(|(_, hits)| *hits)
        .map(|(mood, _)| *mood)
        .unwrap_or("Calm")
}

fn signals_scene_change(excerpt: &str) -> bool {
    const CUES: [&str; 6] = ["meanwhile", "later", "next day", "you arrive", "you enter", "suddenly"];
    let lower = excerpt.to_lowercase();
    CUES.iter().any(|c| lower.contains(c))
}

fn describe(mood: &str, excerpt: &str, seed: u64) -> String {
    const LEADS: [&str; 6] = ["strings", "harp", "low brass", "choir", "lute", "piano"];
    const TEXTURES: [&str; 6] = [
        "a slow pulsing drone",
        "driving percussion",
        "sparse plucked motifs",
        "warm sustained pads",
        "a soaring melody",
        "shimmering bells",
    ];
    let h = stable_hash64(format!("{seed}\u{1f}{excerpt}").as_bytes());
    let lead = LEADS[(h % LEADS.len() as u64) as usize];
    let texture = TEXTURES[((h >> 16) % TEXTURES.len() as u64) as usize];
    format!("{mood} background music led by {lead} with {texture}")
}

/// Sum of three sine tones at amplitude 0.3 with a one-second linear fade-in.
///
/// Tone frequencies (110 Hz to 1760 Hz, log-uniform) come from the hash of the
/// description alone; tone phases come from the hash of the description
/// together with `tail_hash`. A fixed description therefore keeps its
/// spectrum across continuations while the waveform still depends on the
/// conditioning audio.
pub fn mock_music_synthesize(description: &str, tail_hash: u64, duration_s: f64, sample_rate_hz: u32) -> AudioSegment {
    let tone_hash = stable_hash64(description.as_bytes());
    let mut phase_input = description.as_bytes().to_vec();
    phase_input.push(0x1f);
    phase_input.extend_from_slice(&tail_hash.to_le_bytes());
    let phase_hash = stable_hash64(&phase_input);

    let unit = |h: u64, k: u32| ((h >> (16 * k)) & 0xffff) as f64 / 65_536.0;
    let tones: Vec<(f64, f64)> = (0..3)
        .map(|k| {
            let freq = LOWEST_TONE_HZ * 2f64.powf(TONE_OCTAVES * unit(tone_hash, k));
            (freq, TAU * unit(phase_hash, k))
        })
        .collect();

    let rate = sample_rate_hz as f64;
    let n = seconds_to_samples(duration_s, sample_rate_hz);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let fade = (t / FADE_IN_S).min(1.0);
            let sum: f64 = tones.iter().map(|(f, phi)| (TAU * f * t + phi).sin()).sum();
            (fade * TONE_AMPLITUDE * sum) as f32
        })
        .collect();
    AudioSegment { samples, sample_rate_hz, index: 0 }
}

/// Music backend built on [`mock_music_synthesize`].
///
/// When previous audio is supplied, its final 128 samples are copied into the
/// first 128 samples of the new segment, so the continuation starts exactly
/// where the conditioning audio left off.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockMusic;

impl MusicBackend for MockMusic {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
        req.validate()?;
        let mut audio = mock_music_synthesize(&req.description, req.tail_hash(), req.duration_s, req.sample_rate_hz);
        if let Some(tail) = &req.previous_audio_tail {
            let seed_len = CONTINUATION_SEED_SAMPLES.min(tail.samples.len()).min(audio.samples.len());
            let from = &tail.samples[tail.samples.len() - seed_len..];
            audio.samples[..seed_len].copy_from_slice(from);
        }
        Ok(audio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{llm_complete, music_generate, ChatMessage};

    fn ask(llm: &MockLlm, text: &str, seed: Option<u64>) -> String {
        let req = LlmRequest {
            system_prompt: "sys".into(),
            messages: vec![ChatMessage::user(text)],
            temperature: 0.7,
            seed,
        };
        llm_complete(llm, &req).unwrap()
    }

    #[test]
    fn scripted_rule_wins() {
        let llm = MockLlm::new().rule("dragon", "Epic orchestral battle music");
        assert_eq!(ask(&llm, "You see a dragon in front of you.", None), "Epic orchestral battle music");
    }

    #[test]
    fn deterministic_for_same_request() {
        let llm = MockLlm::new();
        let a = ask(&llm, "Transcript excerpt: the party rests by the fire", Some(3));
        let b = ask(&llm, "Transcript excerpt: the party rests by the fire", Some(3));
        assert_eq!(a, b);
    }

    #[test]
    fn heuristic_emotion_reply() {
        let llm = MockLlm::new();
        let text = format!("{EMOTION_PROMPT}\n\nDialogue: roll initiative, the battle starts");
        assert_eq!(ask(&llm, &text, None), "Agitated.");
    }

    #[test]
    fn synthesis_is_pure() {
        let a = mock_music_synthesize("calm", 9, 2.0, 8000);
        let b = mock_music_synthesize("calm", 9, 2.0, 8000);
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 16_000);
        assert_eq!(a.samples[0], 0.0);
    }

    #[test]
    fn length_arithmetic() {
        let req = MusicRequest {
            description: "calm".into(),
            previous_audio_tail: None,
            duration_s: 30.0,
            sample_rate_hz: 32_000,
        };
        assert_eq!(music_generate(&MockMusic, &req).unwrap().samples.len(), 960_000);
    }

    #[test]
    fn peak_bounded() {
        for d in ["a", "b", "storm", "tavern"] {
            let s = mock_music_synthesize(d, 1, 3.0, 8000);
            assert!(s.samples.iter().all(|x| x.abs() <= 0.9));
        }
    }
}
