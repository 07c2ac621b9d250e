//! Description strategies mapping each transcript window to a music prompt.
//!
//! * Baseline: the transcript itself is the prompt.
//! * Emotion: the language model picks one of four emotions, which fills a fixed template.
//! * Description: the language model writes a free-form music description.
//! * Description continuation: like Description, but the model may keep the
//!   previous description when the scene has not changed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, GatewayError, LlmBackend, LlmRequest, DEFAULT_TEMPERATURE};
use crate::ingest::TranscriptSegment;

pub const SYSTEM_PROMPT: &str = "You are going to receive a series of Role-playing Game (RPG) video transcript excerpts from players' dialogues playing a campaign";
pub const EMOTION_PROMPT: &str =
    "Classify each dialogue into one of the following emotions: Happy, Calm, Agitated, or Suspenseful.";
pub const DESCRIPTION_PROMPT: &str =
    "For each transcript excerpt, describe a piece of background music that matches that excerpt.";
pub const CONTINUATION_PROMPT: &str = "Determine whether this dialogue is from the same scene as the previous dialogue and based on this determination, either return the previous music description or generate a new one";
pub const SAME_SCENE_INSTRUCTION: &str = "If it is the same scene, reply with exactly SAME.";
pub const SAME_SENTINEL: &str = "SAME";
pub const EMOTION_TEMPLATE_PREFIX: &str =
    "Background music for a Role-playing Game (RPG) dialogue, with the following emotion: ";
/// Used whenever there is nothing usable to describe.
pub const NEUTRAL_DESCRIPTION: &str = "Calm ambient background music for a Role-playing Game (RPG) dialogue";
pub const DEFAULT_CONTEXT_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "emotion")]
    Emotion,
    #[serde(rename = "description")]
    Description,
    #[serde(rename = "dc")]
    DescriptionContinuation,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::Emotion,
        Strategy::Description,
        Strategy::DescriptionContinuation,
    ];

    /// Column label used in report tables.
    pub fn short_label(self) -> &'static str {
        match self {
            Strategy::Baseline => "B",
            Strategy::Emotion => "E",
            Strategy::Description => "D",
            Strategy::DescriptionContinuation => "DC",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Emotion => "emotion",
            Strategy::Description => "description",
            Strategy::DescriptionContinuation => "dc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "b" => Ok(Strategy::Baseline),
            "emotion" | "e" => Ok(Strategy::Emotion),
            "description" | "d" => Ok(Strategy::Description),
            "dc" | "description_continuation" | "description-continuation" => {
                Ok(Strategy::DescriptionContinuation)
            }
            other => Err(format!("unknown strategy {other:?} (expected baseline, emotion, description or dc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Happy,
    Calm,
    Agitated,
    Suspenseful,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Happy, Emotion::Calm, Emotion::Agitated, Emotion::Suspenseful];

    pub fn label(self) -> &'static str {
        match self {
            Emotion::Happy => "Happy",
            Emotion::Calm => "Calm",
            Emotion::Agitated => "Agitated",
            Emotion::Suspenseful => "Suspenseful",
        }
    }

    /// Case-insensitive scan for the earliest label in `reply`; `Calm` when none appears.
    pub fn parse_reply(reply: &str) -> Emotion {
        let lower = reply.to_lowercase();
        Emotion::ALL
            .iter()
            .filter_map(|e| lower.find(&e.label().to_lowercase()).map(|pos| (pos, *e)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, e)| e)
            .unwrap_or(Emotion::Calm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicDescription {
    pub index: usize,
    pub strategy: Strategy,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub emotion: Option<Emotion>,
    pub continued_from_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectorState {
    pub previous_description: Option<MusicDescription>,
    pub conversation_context: Vec<Exchange>,
}

impl DirectorState {
    fn remember(&mut self, exchange: Exchange, limit: usize) {
        self.conversation_context.push(exchange);
        let excess = self.conversation_context.len().saturating_sub(limit);
        self.conversation_context.drain(..excess);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlmOptions {
    pub temperature: f64,
    pub seed: Option<u64>,
    pub context_limit: usize,
}

impl Default for LlmOptions {
    fn default() -> Self {
        Self { temperature: DEFAULT_TEMPERATURE, seed: None, context_limit: DEFAULT_CONTEXT_LIMIT }
    }
}

pub fn system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

fn neutral(index: usize, strategy: Strategy) -> MusicDescription {
    MusicDescription {
        index,
        strategy,
        text: NEUTRAL_DESCRIPTION.to_string(),
        emotion: None,
        continued_from_previous: false,
    }
}

/// The transcript is used verbatim as the music prompt.
pub fn describe_baseline(s: &TranscriptSegment) -> MusicDescription {
    if s.text.trim().is_empty() {
        return neutral(s.index, Strategy::Baseline);
    }
    MusicDescription {
        index: s.index,
        strategy: Strategy::Baseline,
        text: s.text.clone(),
        emotion: None,
        continued_from_previous: false,
    }
}

pub fn emotion_user_message(s: &TranscriptSegment) -> String {
    format!("{EMOTION_PROMPT}\n\nDialogue: {}", s.text)
}

pub fn description_user_message(s: &TranscriptSegment) -> String {
    format!("{DESCRIPTION_PROMPT}\n\nTranscript excerpt: {}", s.text)
}

pub fn continuation_user_message(s: &TranscriptSegment, previous: &str) -> String {
    format!(
        "{CONTINUATION_PROMPT}. {SAME_SCENE_INSTRUCTION}\n\nPrevious music description: {previous}\n\nDialogue: {}",
        s.text
    )
}

fn request(context: &[Exchange], user: String, opts: &LlmOptions) -> LlmRequest {
    let mut messages = Vec::with_capacity(context.len() * 2 + 1);
    for ex in context {
        messages.push(ChatMessage::user(ex.prompt.clone()));
        messages.push(ChatMessage::assistant(ex.response.clone()));
    }
    messages.push(ChatMessage::user(user));
    LlmRequest {
        system_prompt: SYSTEM_PROMPT.to_string(),
        messages,
        temperature: opts.temperature,
        seed: opts.seed,
    }
}

pub fn classify_emotion(s: &TranscriptSegment, llm: &dyn LlmBackend, opts: &LlmOptions) -> Result<Emotion, GatewayError> {
    let reply = llm.complete(&request(&[], emotion_user_message(s), opts))?;
    Ok(Emotion::parse_reply(&reply))
}

pub fn render_emotion_template(e: Emotion, index: usize) -> MusicDescription {
    MusicDescription {
        index,
        strategy: Strategy::Emotion,
        text: format!("{EMOTION_TEMPLATE_PREFIX}{}", e.label()),
        emotion: Some(e),
        continued_from_previous: false,
    }
}

/// Asks once, retries once on an empty answer, and gives `None` if both were empty.
fn ask_non_empty(llm: &dyn LlmBackend, req: &LlmRequest) -> Result<Option<String>, GatewayError> {
    for _ in 0..2 {
        let reply = llm.complete(req)?;
        let trimmed = reply.trim();
        if !trimmed.is_empty() {
            return Ok(Some(trimmed.to_string()));
        }
    }
    Ok(None)
}

fn describe_with_prompt(
    s: &TranscriptSegment,
    llm: &dyn LlmBackend,
    state: &mut DirectorState,
    opts: &LlmOptions,
    strategy: Strategy,
) -> Result<MusicDescription, GatewayError> {
    let user = description_user_message(s);
    let req = request(&state.conversation_context, user.clone(), opts);
    let description = match ask_non_empty(llm, &req)? {
        Some(text) => MusicDescription { index: s.index, strategy, text, emotion: None, continued_from_previous: false },
        None => {
            log::warn!("segment {}: empty description twice, using the neutral default", s.index);
            neutral(s.index, strategy)
        }
    };
    state.remember(Exchange { prompt: user, response: description.text.clone() }, opts.context_limit);
    state.previous_description = Some(description.clone());
    Ok(description)
}

pub fn describe_full(
    s: &TranscriptSegment,
    llm: &dyn LlmBackend,
    state: &mut DirectorState,
    opts: &LlmOptions,
) -> Result<MusicDescription, GatewayError> {
    describe_with_prompt(s, llm, state, opts, Strategy::Description)
}

/// True when the reply asks to keep the previous description.
pub fn is_same_scene(reply: &str, previous: &str) -> bool {
    let trimmed = reply.trim();
    trimmed.to_uppercase() == SAME_SENTINEL || trimmed == previous
}

pub fn describe_continuation(
    s: &TranscriptSegment,
    llm: &dyn LlmBackend,
    state: &mut DirectorState,
    opts: &LlmOptions,
) -> Result<MusicDescription, GatewayError> {
    let Some(previous) = state.previous_description.clone() else {
        return describe_with_prompt(s, llm, state, opts, Strategy::DescriptionContinuation);
    };
    let user = continuation_user_message(s, &previous.text);
    let req = request(&state.conversation_context, user.clone(), opts);
    let (description, response) = match ask_non_empty(llm, &req)? {
        Some(reply) if is_same_scene(&reply, &previous.text) => (
            MusicDescription {
                index: s.index,
                strategy: Strategy::DescriptionContinuation,
                text: previous.text.clone(),
                emotion: None,
                continued_from_previous: true,
            },
            reply,
        ),
        Some(reply) => (
            MusicDescription {
                index: s.index,
                strategy: Strategy::DescriptionContinuation,
                text: reply.clone(),
                emotion: None,
                continued_from_previous: false,
            },
            reply,
        ),
        None => {
            log::warn!("segment {}: empty description twice, using the neutral default", s.index);
            let d = neutral(s.index, Strategy::DescriptionContinuation);
            let text = d.text.clone();
            (d, text)
        }
    };
    state.remember(Exchange { prompt: user, response }, opts.context_limit);
    state.previous_description = Some(description.clone());
    Ok(description)
}

/// Drives one strategy over an ordered sequence of transcript windows.
#[derive(Debug, Clone)]
pub struct Director {
    strategy: Strategy,
    state: DirectorState,
    opts: LlmOptions,
}

impl Director {
    pub fn new(strategy: Strategy, opts: LlmOptions) -> Self {
        Self { strategy, state: DirectorState::default(), opts }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn state(&self) -> &DirectorState {
        &self.state
    }

    pub fn describe(&mut self, s: &TranscriptSegment, llm: &dyn LlmBackend) -> Result<MusicDescription, GatewayError> {
        let d = match self.strategy {
            Strategy::Baseline => describe_baseline(s),
            Strategy::Emotion => render_emotion_template(classify_emotion(s, llm, &self.opts)?, s.index),
            Strategy::Description => return describe_full(s, llm, &mut self.state, &self.opts),
            Strategy::DescriptionContinuation => return describe_continuation(s, llm, &mut self.state, &self.opts),
        };
        self.state.previous_description = Some(d.clone());
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockLlm;
    use std::sync::Mutex;

    fn seg(index: usize, text: &str) -> TranscriptSegment {
        TranscriptSegment {
            index,
            window_start_s: index as f64 * 30.0,
            window_end_s: (index + 1) as f64 * 30.0,
            text: text.into(),
            language_tag: "en".into(),
        }
    }

    /// Replies from a fixed list in call order and records every request.
    struct Sequence {
        replies: Vec<&'static str>,
        seen: Mutex<Vec<LlmRequest>>,
    }

    impl Sequence {
        fn new(replies: Vec<&'static str>) -> Self {
            Self { replies, seen: Mutex::new(Vec::new()) }
        }
    }

    impl LlmBackend for Sequence {
        fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
            let mut seen = self.seen.lock().unwrap();
            let reply = self.replies[seen.len().min(self.replies.len() - 1)];
            seen.push(req.clone());
            Ok(reply.to_string())
        }
    }

    struct Down;
    impl LlmBackend for Down {
        fn complete(&self, _: &LlmRequest) -> Result<String, GatewayError> {
            Err(GatewayError::BackendUnavailable { attempts: 1, last_error: "down".into() })
        }
    }

    #[test]
    fn system_prompt_is_stable() {
        assert_eq!(
            system_prompt(),
            "You are going to receive a series of Role-playing Game (RPG) video transcript excerpts from players' dialogues playing a campaign"
        );
        assert!(std::ptr::eq(system_prompt(), system_prompt()));
    }

    #[test]
    fn every_strategy_sends_the_same_system_prompt() {
        for strategy in [Strategy::Emotion, Strategy::Description, Strategy::DescriptionContinuation] {
            let llm = Sequence::new(vec!["Calm"]);
            let mut director = Director::new(strategy, LlmOptions::default());
            director.describe(&seg(0, "hello"), &llm).unwrap();
            director.describe(&seg(1, "hello again"), &llm).unwrap();
            for req in llm.seen.lock().unwrap().iter() {
                assert_eq!(req.system_prompt, SYSTEM_PROMPT);
            }
        }
    }

    #[test]
    fn baseline_is_identity() {
        let d = describe_baseline(&seg(2, "You see a dragon in front of you."));
        assert_eq!(d.text, "You see a dragon in front of you.");
        assert_eq!(d.strategy, Strategy::Baseline);
        assert_eq!(d.index, 2);
        let empty = describe_baseline(&seg(0, "  "));
        assert_eq!(empty.text, NEUTRAL_DESCRIPTION);
        assert!(!empty.continued_from_previous);
    }

    #[test]
    fn emotion_parsing() {
        assert_eq!(Emotion::parse_reply("Suspenseful."), Emotion::Suspenseful);
        assert_eq!(Emotion::parse_reply("I think this is quite agitated, honestly"), Emotion::Agitated);
        assert_eq!(Emotion::parse_reply("joyful"), Emotion::Calm);
        assert_eq!(Emotion::parse_reply("HAPPY, though a bit suspenseful"), Emotion::Happy);
        assert_eq!(Emotion::parse_reply(""), Emotion::Calm);
    }

    #[test]
    fn classify_sends_prompt_and_text() {
        let llm = Sequence::new(vec!["Suspenseful."]);
        let e = classify_emotion(&seg(0, "A door creaks"), &llm, &LlmOptions::default()).unwrap();
        assert_eq!(e, Emotion::Suspenseful);
        let seen = llm.seen.lock().unwrap();
        let text = seen[0].last_user_text();
        assert!(text.starts_with(EMOTION_PROMPT));
        assert!(text.ends_with("A door creaks"));
    }

    #[test]
    fn emotion_template() {
        let d = render_emotion_template(Emotion::Suspenseful, 0);
        assert_eq!(
            d.text,
            "Background music for a Role-playing Game (RPG) dialogue, with the following emotion: Suspenseful"
        );
        assert_eq!(d.emotion, Some(Emotion::Suspenseful));
        assert!(render_emotion_template(Emotion::Happy, 0).text.ends_with(": Happy"));
    }

    #[test]
    fn full_description_trims_and_records_context() {
        let llm = Sequence::new(vec!["  Thunderous drums and brass \n"]);
        let mut state = DirectorState::default();
        let d = describe_full(&seg(0, "A battle will start!"), &llm, &mut state, &LlmOptions::default()).unwrap();
        assert_eq!(d.text, "Thunderous drums and brass");
        assert_eq!(state.conversation_context.len(), 1);
        assert_eq!(state.previous_description.as_ref(), Some(&d));
    }

    #[test]
    fn empty_twice_falls_back() {
        let llm = Sequence::new(vec!["  ", "\n"]);
        let mut state = DirectorState::default();
        let d = describe_full(&seg(0, "x"), &llm, &mut state, &LlmOptions::default()).unwrap();
        assert_eq!(d.text, NEUTRAL_DESCRIPTION);
        assert_eq!(llm.seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn empty_once_then_retry_succeeds() {
        let llm = Sequence::new(vec!["", "Soft harp"]);
        let mut state = DirectorState::default();
        let d = describe_full(&seg(0, "x"), &llm, &mut state, &LlmOptions::default()).unwrap();
        assert_eq!(d.text, "Soft harp");
    }

    #[test]
    fn full_description_is_deterministic() {
        let llm = MockLlm::new().rule("battle", "Epic orchestral battle music");
        let opts = LlmOptions { seed: Some(5), ..LlmOptions::default() };
        let a = describe_full(&seg(0, "A battle will start!"), &llm, &mut DirectorState::default(), &opts).unwrap();
        let b = describe_full(&seg(0, "A battle will start!"), &llm, &mut DirectorState::default(), &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, "Epic orchestral battle music");
    }

    #[test]
    fn continuation_same_scene() {
        let llm = Sequence::new(vec!["calm tavern lute music", "SAME", " same ", "calm tavern lute music"]);
        let mut state = DirectorState::default();
        let opts = LlmOptions::default();
        let first = describe_continuation(&seg(0, "We enter the tavern"), &llm, &mut state, &opts).unwrap();
        assert_eq!(first.text, "calm tavern lute music");
        assert!(!first.continued_from_previous);
        for i in 1..4 {
            let d = describe_continuation(&seg(i, "we order ale"), &llm, &mut state, &opts).unwrap();
            assert_eq!(d.text, "calm tavern lute music");
            assert!(d.continued_from_previous);
            assert_eq!(d.index, i);
        }
        let seen = llm.seen.lock().unwrap();
        assert!(seen[0].last_user_text().starts_with(DESCRIPTION_PROMPT));
        let dc = seen[1].last_user_text();
        assert!(dc.starts_with(CONTINUATION_PROMPT));
        assert!(dc.contains(SAME_SCENE_INSTRUCTION));
        assert!(dc.contains("calm tavern lute music"));
        assert!(dc.contains("we order ale"));
    }

    #[test]
    fn continuation_new_scene() {
        let llm = Sequence::new(vec!["calm tavern lute music", "An eerie drone with low strings"]);
        let mut state = DirectorState::default();
        let opts = LlmOptions::default();
        describe_continuation(&seg(0, "a"), &llm, &mut state, &opts).unwrap();
        let d = describe_continuation(&seg(1, "b"), &llm, &mut state, &opts).unwrap();
        assert_eq!(d.text, "An eerie drone with low strings");
        assert!(!d.continued_from_previous);
    }

    #[test]
    fn continuation_first_segment_matches_full() {
        let llm = MockLlm::new().rule("dragon", "Epic brass");
        let opts = LlmOptions::default();
        let mut a = DirectorState::default();
        let mut b = DirectorState::default();
        let dc = describe_continuation(&seg(0, "a dragon"), &llm, &mut a, &opts).unwrap();
        let full = describe_full(&seg(0, "a dragon"), &llm, &mut b, &opts).unwrap();
        assert_eq!(dc.text, full.text);
        assert_eq!(dc.continued_from_previous, full.continued_from_previous);
        assert_eq!(a.conversation_context, b.conversation_context);
    }

    #[test]
    fn context_is_bounded() {
        let llm = Sequence::new(vec!["music"]);
        let mut director = Director::new(Strategy::Description, LlmOptions::default());
        for i in 0..12 {
            director.describe(&seg(i, "talk"), &llm).unwrap();
        }
        assert_eq!(director.state().conversation_context.len(), DEFAULT_CONTEXT_LIMIT);
        let last = llm.seen.lock().unwrap().last().unwrap().clone();
        assert_eq!(last.messages.len(), 2 * DEFAULT_CONTEXT_LIMIT + 1);
    }

    #[test]
    fn backend_errors_propagate() {
        let mut state = DirectorState::default();
        assert!(describe_full(&seg(0, "x"), &Down, &mut state, &LlmOptions::default()).is_err());
        assert!(classify_emotion(&seg(0, "x"), &Down, &LlmOptions::default()).is_err());
        assert!(state.previous_description.is_none());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
        assert!("jazz".parse::<Strategy>().is_err());
    }

    #[test]
    fn record_shape() {
        let d = render_emotion_template(Emotion::Calm, 3);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["strategy"], "emotion");
        assert_eq!(v["emotion"], "Calm");
        let b = serde_json::to_value(describe_baseline(&seg(0, "x"))).unwrap();
        assert!(b.get("emotion").is_none());
    }
}
