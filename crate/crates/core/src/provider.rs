//! Language-model backends and the answer parser.
//!
//! [`MockOverlap`] is a deterministic lexical oracle used for hermetic
//! runs; [`HttpChat`] talks to any OpenAI-style chat-completions endpoint.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{normalize_text, CausalItem};
use crate::counterfactual::{Counterfactual, CounterfactualRewriter};
use crate::knowledge::extract_concepts;
use crate::prompting::{LabelStyle, PromptPackage};

pub const API_KEY_ENV: &str = "CARE_CA_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider misconfigured: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("unusable response: {0}")]
    Response(String),
}

/// A parsed model decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<usize>", into = "Option<usize>")]
pub enum Prediction {
    Choice(usize),
    Abstain,
}

impl Prediction {
    pub fn index(self) -> Option<usize> {
        match self {
            Prediction::Choice(i) => Some(i),
            Prediction::Abstain => None,
        }
    }
}

impl From<Option<usize>> for Prediction {
    fn from(value: Option<usize>) -> Self {
        value.map_or(Prediction::Abstain, Prediction::Choice)
    }
}

impl From<Prediction> for Option<usize> {
    fn from(value: Prediction) -> Self {
        value.index()
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Choice(i) => write!(f, "{i}"),
            Prediction::Abstain => f.write_str("abstain"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAnswer {
    pub raw_text: String,
    pub parsed: Prediction,
    pub latency_ms: u64,
    pub provider_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[serde(alias = "mock")]
    MockOverlap,
    #[serde(alias = "http")]
    HttpChat,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mock" | "mock_overlap" => Ok(ProviderKind::MockOverlap),
            "http" | "http_chat" => Ok(ProviderKind::HttpChat),
            other => Err(format!("unknown provider `{other}` (expected mock or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub temperature: f64,
    pub max_concurrency: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::MockOverlap,
            endpoint: None,
            model_name: None,
            timeout_ms: 30_000,
            max_retries: 3,
            retry_backoff_ms: 250,
            temperature: 0.0,
            max_concurrency: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout_ms must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(ProviderError::Config("max_concurrency must be positive".into()));
        }
        if self.kind == ProviderKind::HttpChat {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(ProviderError::Config("http_chat requires provider.endpoint".into()));
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return Err(ProviderError::Config("http_chat requires provider.model_name".into()));
            }
        }
        Ok(())
    }
}

/// A backend that answers an assembled prompt with raw text.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn respond(&self, pkg: &PromptPackage) -> Result<String, ProviderError>;
}

/// Free-form two-message chat.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError>;
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::MockOverlap => Box::new(MockOverlap),
        ProviderKind::HttpChat => Box::new(HttpChat::new(cfg)?),
    })
}

/// Queries `provider` and parses its reply against the package labels.
pub fn complete(pkg: &PromptPackage, provider: &dyn Provider) -> Result<ModelAnswer, ProviderError> {
    let started = Instant::now();
    let raw_text = provider.respond(pkg)?;
    let latency_ms = started.elapsed().as_millis() as u64;
    Ok(ModelAnswer {
        parsed: parse_answer(&raw_text, &pkg.labels, &pkg.choices),
        raw_text,
        latency_ms,
        provider_id: provider.id().to_string(),
    })
}

/// Picks the choice sharing the most content-word lemmas with the prompt's
/// knowledge statements and premise; ties go to the lowest index.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockOverlap;

impl MockOverlap {
    pub const ID: &'static str = "mock-overlap";

    pub fn scores(pkg: &PromptPackage) -> Vec<usize> {
        let mut evidence = pkg.knowledge.join(" ");
        evidence.push(' ');
        evidence.push_str(&pkg.premise);
        let evidence: HashSet<String> = extract_concepts(&evidence)
            .into_iter()
            .map(|c| c.lemma)
            .collect();
        pkg.choices
            .iter()
            .map(|choice| {
                extract_concepts(choice)
                    .iter()
                    .filter(|c| evidence.contains(&c.lemma))
                    .count()
            })
            .collect()
    }

    pub fn pick(pkg: &PromptPackage) -> usize {
        let scores = Self::scores(pkg);
        let best = scores.iter().copied().max().unwrap_or(0);
        scores.iter().position(|&s| s == best).unwrap_or(0)
    }
}

impl Provider for MockOverlap {
    fn id(&self) -> &str {
        Self::ID
    }

    fn respond(&self, pkg: &PromptPackage) -> Result<String, ProviderError> {
        pkg.labels
            .get(Self::pick(pkg))
            .cloned()
            .ok_or_else(|| ProviderError::Response("prompt has no labels".into()))
    }
}

/// OpenAI-style chat-completions client with bounded retries.
#[derive(Debug, Clone)]
pub struct HttpChat {
    id: String,
    endpoint: String,
    model: String,
    temperature: f64,
    timeout_ms: u64,
    max_retries: u32,
    backoff: Duration,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        let mut cfg = cfg.clone();
        cfg.kind = ProviderKind::HttpChat;
        cfg.validate()?;
        let model = cfg.model_name.clone().unwrap_or_default();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            id: format!("http:{model}"),
            endpoint: cfg.endpoint.clone().unwrap_or_default(),
            model,
            temperature: cfg.temperature,
            timeout_ms: cfg.timeout_ms,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.retry_backoff_ms),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
        })
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(Attempt::from)?;
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(ProviderError::Response(e.to_string())))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| {
                Attempt::Fatal(ProviderError::Response(
                    "missing choices[0].message.content".into(),
                ))
            })
    }
}

enum Attempt {
    Retry(String),
    Timeout,
    Fatal(ProviderError),
}

impl From<ureq::Error> for Attempt {
    fn from(err: ureq::Error) -> Self {
        match err {
            ureq::Error::Timeout(_) => Attempt::Timeout,
            ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => Attempt::Timeout,
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
                Attempt::Retry(format!("HTTP status {code}"))
            }
            ureq::Error::StatusCode(code) => {
                Attempt::Fatal(ProviderError::Response(format!("HTTP status {code}")))
            }
            other => Attempt::Retry(other.to_string()),
        }
    }
}

impl ChatBackend for HttpChat {
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        let body = self.request_body(system, user);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Timeout) => {
                    return Err(ProviderError::Timeout {
                        timeout_ms: self.timeout_ms,
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempts > self.max_retries {
                        return Err(ProviderError::Transport { attempts, message });
                    }
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempts - 1));
                }
            }
        }
    }
}

impl Provider for HttpChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, pkg: &PromptPackage) -> Result<String, ProviderError> {
        self.chat(&pkg.system_text, &pkg.user_text)
    }
}

/// Counterfactual rewriting through a chat backend. Not used unless wired
/// in explicitly.
pub struct ChatRewriter<C> {
    backend: C,
}

impl<C: ChatBackend> ChatRewriter<C> {
    pub const SYSTEM: &'static str =
        "Rewrite the statement as one fluent sentence with the same meaning. Reply with the sentence only.";

    pub fn new(backend: C) -> Self {
        Self { backend }
    }
}

impl<C: ChatBackend> CounterfactualRewriter for ChatRewriter<C> {
    fn rewrite(&self, item: &CausalItem, statement: &Counterfactual) -> Option<String> {
        let user = format!("Scenario: {}\nStatement: {}", item.context, statement.text);
        self.backend.chat(Self::SYSTEM, &user).ok()
    }
}

fn fold(text: &str) -> String {
    normalize_text(text).to_lowercase()
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// True when `needle` occurs in `hay` without word characters on either side.
fn contains_bounded(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(at, m)| {
        let before = hay[..at].chars().next_back();
        let after = hay[at + m.len()..].chars().next();
        let needle_starts_word = needle.chars().next().is_some_and(char::is_alphanumeric);
        let needle_ends_word = needle.chars().next_back().is_some_and(char::is_alphanumeric);
        !(needle_starts_word && is_word_char(before)) && !(needle_ends_word && is_word_char(after))
    })
}

fn unique(hits: BTreeSet<usize>) -> Option<Prediction> {
    match hits.len() {
        0 => None,
        1 => hits.first().copied().map(Prediction::Choice),
        _ => Some(Prediction::Abstain),
    }
}

/// Maps free model text to a choice index.
///
/// Tiers, first hit wins: exact label, label as a bounded substring, a
/// choice's full text as a substring, then a bare number or capital letter
/// in the label style. Several distinct hits within one tier is ambiguous
/// and yields [`Prediction::Abstain`], as does no hit at all.
pub fn parse_answer(raw: &str, labels: &[String], choices: &[String]) -> Prediction {
    let text = fold(raw);
    let folded_labels: Vec<String> = labels.iter().map(|l| fold(l)).collect();

    let bare = text.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '.' | '"' | '\'' | '*' | '`' | ':' | ',' | '!')
    });
    let exact: BTreeSet<usize> = folded_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && (text == **l || bare == l.as_str()))
        .map(|(i, _)| i)
        .collect();
    if let Some(p) = unique(exact) {
        return p;
    }

    let substring: BTreeSet<usize> = folded_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| contains_bounded(&text, l))
        .map(|(i, _)| i)
        .collect();
    if let Some(p) = unique(substring) {
        return p;
    }

    let by_choice: BTreeSet<usize> = choices
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let needle = fold(c);
            let needle = needle.trim_end_matches(['.', '!', '?']);
            contains_bounded(&text, needle)
        })
        .map(|(i, _)| i)
        .collect();
    if let Some(p) = unique(by_choice) {
        return p;
    }

    let n = labels.len();
    let tokens = raw.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty());
    let bare_hits: BTreeSet<usize> = match LabelStyle::infer(labels) {
        LabelStyle::Hypothesis => tokens
            .filter_map(|t| t.parse::<usize>().ok())
            .filter(|&i| (1..=n).contains(&i))
            .map(|i| i - 1)
            .collect(),
        LabelStyle::Letter => tokens
            .filter_map(|t| {
                let mut chars = t.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_uppercase() => Some((c as u8 - b'A') as usize),
                    _ => None,
                }
            })
            .filter(|&i| i < n)
            .collect(),
    };
    unique(bare_hits).unwrap_or(Prediction::Abstain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyp() -> Vec<String> {
        vec!["Hypothesis 1".into(), "Hypothesis 2".into()]
    }

    fn choices() -> Vec<String> {
        vec!["The sun was rising.".into(), "The grass was cut.".into()]
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_answer("Hypothesis 1", &hyp(), &choices()), Prediction::Choice(0));
        assert_eq!(
            parse_answer("I believe the correct answer is Hypothesis 2 because…", &hyp(), &choices()),
            Prediction::Choice(1)
        );
        assert_eq!(parse_answer("Both seem plausible", &hyp(), &choices()), Prediction::Abstain);
    }

    #[test]
    fn parse_tiers() {
        assert_eq!(parse_answer("  hypothesis 2. ", &hyp(), &choices()), Prediction::Choice(1));
        assert_eq!(
            parse_answer("Hypothesis 1 or Hypothesis 2", &hyp(), &choices()),
            Prediction::Abstain
        );
        assert_eq!(
            parse_answer("Clearly the grass was cut", &hyp(), &choices()),
            Prediction::Choice(1)
        );
        assert_eq!(parse_answer("I'd say 2", &hyp(), &choices()), Prediction::Choice(1));
        assert_eq!(parse_answer("1 or 2", &hyp(), &choices()), Prediction::Abstain);
        assert_eq!(parse_answer("", &hyp(), &choices()), Prediction::Abstain);
    }

    #[test]
    fn hypothesis_ten_is_not_hypothesis_one() {
        let labels: Vec<String> = (1..=10).map(|i| format!("Hypothesis {i}")).collect();
        let choices: Vec<String> = (0..10).map(|i| format!("option {i}")).collect();
        assert_eq!(parse_answer("It is Hypothesis 10", &labels, &choices), Prediction::Choice(9));
    }

    #[test]
    fn letter_labels() {
        let labels = vec!["A)".to_string(), "B)".to_string(), "C)".to_string()];
        let ch = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        assert_eq!(parse_answer("B)", &labels, &ch), Prediction::Choice(1));
        assert_eq!(parse_answer("The answer is (c)", &labels, &ch), Prediction::Choice(2));
        assert_eq!(parse_answer("I pick A", &labels, &ch), Prediction::Choice(0));
        assert_eq!(parse_answer("I think so", &labels, &ch), Prediction::Abstain);
    }

    #[test]
    fn prediction_serializes_as_nullable_index() {
        assert_eq!(serde_json::to_string(&Prediction::Choice(1)).unwrap(), "1");
        assert_eq!(serde_json::to_string(&Prediction::Abstain).unwrap(), "null");
        let back: Prediction = serde_json::from_str("null").unwrap();
        assert_eq!(back, Prediction::Abstain);
    }

    #[test]
    fn http_config_requires_endpoint_and_model() {
        let cfg = ProviderConfig {
            kind: ProviderKind::HttpChat,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ProviderError::Config(_))));
        let cfg = ProviderConfig {
            endpoint: Some("http://localhost:1".into()),
            model_name: Some("m".into()),
            ..cfg
        };
        assert!(cfg.validate().is_ok());
        assert!("mock".parse::<ProviderKind>().is_ok());
        assert!("gpt".parse::<ProviderKind>().is_err());
    }
}
