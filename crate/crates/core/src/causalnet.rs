//! CausalNet scenario corpus: schema validation, quality filtering,
//! statistics, the generation prompt, and conversion to benchmark items.
//!
//! One entry per line:
//!
//! ```json
//! {"id": "cn-001", "context": "...",
//!  "questions": [{"kind": "CauseEffect", "text": "...", "choices": ["..", ".."], "answer": 0}]}
//! ```
//!
//! Ambiguous causal relationships cannot be detected mechanically; the
//! filter covers duplicates, short contexts and missing question kinds only,
//! and ambiguity stays a manual review step.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{normalize_text, CausalItem, QuestionKind, Task};

pub const GENERATION_PROMPT: &str = "Develop a dataset composed of entries that challenge and enhance machine learning models' understanding of causal relationships and counterfactual reasoning across various domains. Each entry in the dataset should follow this structure:
\"Context\": A detailed description of a scenario that outlines a complex situation involving causal relationships.
\"Questions\": A set of questions focusing on (1) identifying causal effects within the context and (2) exploring counterfactual scenarios, with multiple-choice answers to infer the model's reasoning capabilities.";

pub const DEFAULT_MIN_CONTEXT_WORDS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CausalNetKind {
    CauseEffect,
    Counterfactual,
}

impl From<CausalNetKind> for QuestionKind {
    fn from(kind: CausalNetKind) -> Self {
        match kind {
            CausalNetKind::CauseEffect => QuestionKind::CauseEffect,
            CausalNetKind::Counterfactual => QuestionKind::Counterfactual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalNetQuestion {
    pub kind: CausalNetKind,
    pub text: String,
    pub choices: Vec<String>,
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalNetEntry {
    pub id: String,
    pub context: String,
    pub questions: Vec<CausalNetQuestion>,
}

impl CausalNetEntry {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("entry serializes")
    }

    pub fn has_kind(&self, kind: CausalNetKind) -> bool {
        self.questions.iter().any(|q| q.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotAnObject,
    MissingField(String),
    WrongType { field: String, expected: &'static str },
    EmptyContext,
    NoQuestions,
    EmptyChoices { question: usize },
    TooFewChoices { question: usize },
    DuplicateChoices { question: usize },
    AnswerOutOfRange { question: usize, answer: u64, choices: usize },
    BadKind { question: usize, kind: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotAnObject => f.write_str("record is not an object"),
            Violation::MissingField(name) => write!(f, "missing field: {name}"),
            Violation::WrongType { field, expected } => {
                write!(f, "field {field} must be {expected}")
            }
            Violation::EmptyContext => f.write_str("empty context"),
            Violation::NoQuestions => f.write_str("no questions"),
            Violation::EmptyChoices { question } => {
                write!(f, "question {question}: empty choices")
            }
            Violation::TooFewChoices { question } => {
                write!(f, "question {question}: fewer than 2 choices")
            }
            Violation::DuplicateChoices { question } => {
                write!(f, "question {question}: duplicate choices")
            }
            Violation::AnswerOutOfRange {
                question,
                answer,
                choices,
            } => write!(
                f,
                "question {question}: answer out of range ({answer} with {choices} choices)"
            ),
            Violation::BadKind { question, kind } => {
                write!(f, "question {question}: kind `{kind}` is not CauseEffect or Counterfactual")
            }
        }
    }
}

fn string_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    path: &str,
    violations: &mut Vec<Violation>,
) -> Option<String> {
    match obj.get(key) {
        None => {
            violations.push(Violation::MissingField(path.to_string()));
            None
        }
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            violations.push(Violation::WrongType {
                field: path.to_string(),
                expected: "a string",
            });
            None
        }
    }
}

fn validate_question(idx: usize, value: &Value, violations: &mut Vec<Violation>) -> Option<CausalNetQuestion> {
    let Some(obj) = value.as_object() else {
        violations.push(Violation::WrongType {
            field: format!("questions[{idx}]"),
            expected: "an object",
        });
        return None;
    };
    let before = violations.len();
    let kind = string_field(obj, "kind", &format!("questions[{idx}].kind"), violations).and_then(
        |k| match k.as_str() {
            "CauseEffect" => Some(CausalNetKind::CauseEffect),
            "Counterfactual" => Some(CausalNetKind::Counterfactual),
            _ => {
                violations.push(Violation::BadKind {
                    question: idx,
                    kind: k,
                });
                None
            }
        },
    );
    let text = string_field(obj, "text", &format!("questions[{idx}].text"), violations);
    let choices: Option<Vec<String>> = match obj.get("choices") {
        None => {
            violations.push(Violation::MissingField(format!("questions[{idx}].choices")));
            None
        }
        Some(Value::Array(arr)) => {
            let texts: Option<Vec<String>> = arr.iter().map(|c| c.as_str().map(normalize_text)).collect();
            match texts {
                None => {
                    violations.push(Violation::WrongType {
                        field: format!("questions[{idx}].choices"),
                        expected: "an array of strings",
                    });
                    None
                }
                Some(t) if t.is_empty() => {
                    violations.push(Violation::EmptyChoices { question: idx });
                    None
                }
                Some(t) if t.len() < 2 => {
                    violations.push(Violation::TooFewChoices { question: idx });
                    None
                }
                Some(t) => {
                    let distinct: HashSet<&String> = t.iter().collect();
                    if distinct.len() != t.len() || t.iter().any(String::is_empty) {
                        violations.push(Violation::DuplicateChoices { question: idx });
                        None
                    } else {
                        Some(t)
                    }
                }
            }
        }
        Some(_) => {
            violations.push(Violation::WrongType {
                field: format!("questions[{idx}].choices"),
                expected: "an array of strings",
            });
            None
        }
    };
    let answer = match obj.get("answer") {
        None => {
            violations.push(Violation::MissingField(format!("questions[{idx}].answer")));
            None
        }
        Some(v) => match v.as_u64() {
            Some(a) => Some(a),
            None => {
                violations.push(Violation::WrongType {
                    field: format!("questions[{idx}].answer"),
                    expected: "a non-negative integer",
                });
                None
            }
        },
    };
    if let (Some(choices), Some(answer)) = (&choices, answer) {
        if answer as usize >= choices.len() || answer > usize::MAX as u64 {
            violations.push(Violation::AnswerOutOfRange {
                question: idx,
                answer,
                choices: choices.len(),
            });
        }
    }
    if violations.len() > before {
        return None;
    }
    Some(CausalNetQuestion {
        kind: kind?,
        text: normalize_text(&text?),
        choices: choices?,
        answer: answer? as usize,
    })
}

/// Checks a parsed record against the entry schema, collecting every
/// violation instead of stopping at the first.
pub fn validate(record: &Value) -> Result<CausalNetEntry, Vec<Violation>> {
    let Some(obj) = record.as_object() else {
        return Err(vec![Violation::NotAnObject]);
    };
    let mut violations = Vec::new();
    let id = match obj.get("id") {
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => string_field(obj, "id", "id", &mut violations),
    };
    let context = string_field(obj, "context", "context", &mut violations).map(|c| normalize_text(&c));
    if context.as_deref() == Some("") {
        violations.push(Violation::EmptyContext);
    }
    let mut questions = Vec::new();
    match obj.get("questions") {
        None => violations.push(Violation::MissingField("questions".into())),
        Some(Value::Array(arr)) if arr.is_empty() => violations.push(Violation::NoQuestions),
        Some(Value::Array(arr)) => {
            for (idx, q) in arr.iter().enumerate() {
                if let Some(q) = validate_question(idx, q, &mut violations) {
                    questions.push(q);
                }
            }
        }
        Some(_) => violations.push(Violation::WrongType {
            field: "questions".into(),
            expected: "an array",
        }),
    }
    match (id, context) {
        (Some(id), Some(context)) if violations.is_empty() => Ok(CausalNetEntry {
            id,
            context,
            questions,
        }),
        _ => Err(violations),
    }
}

/// Per-line validation result of a JSON-lines corpus. Blank lines are skipped.
pub fn validate_lines(text: &str) -> Vec<(usize, Result<CausalNetEntry, Vec<Violation>>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let result = match serde_json::from_str::<Value>(line) {
                Ok(v) => validate(&v),
                Err(e) => Err(vec![Violation::WrongType {
                    field: format!("line ({e})"),
                    expected: "valid JSON",
                }]),
            };
            (idx + 1, result)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub drop_duplicates: bool,
    pub min_context_words: usize,
    pub require_both_kinds: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            drop_duplicates: true,
            min_context_words: DEFAULT_MIN_CONTEXT_WORDS,
            require_both_kinds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    TooShort { words: usize, min: usize },
    MissingKind(CausalNetKind),
    Duplicate { of: String },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::TooShort { words, min } => {
                write!(f, "too short ({words} words, minimum {min})")
            }
            RejectReason::MissingKind(kind) => write!(f, "no {kind:?} question"),
            RejectReason::Duplicate { of } => write!(f, "duplicate of {of}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub entry: CausalNetEntry,
    pub reason: RejectReason,
}

fn context_key(context: &str) -> String {
    normalize_text(context).to_lowercase()
}

/// Splits entries into kept and rejected, in input order. An entry is a
/// duplicate when its normalized context equals that of an earlier kept
/// entry, so filtering the kept set again rejects nothing.
pub fn filter_corpus(
    entries: &[CausalNetEntry],
    policy: &FilterPolicy,
) -> (Vec<CausalNetEntry>, Vec<Rejected>) {
    let mut kept: Vec<CausalNetEntry> = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    for entry in entries {
        let words = entry.context.split_whitespace().count();
        let reason = if words < policy.min_context_words {
            Some(RejectReason::TooShort {
                words,
                min: policy.min_context_words,
            })
        } else if policy.require_both_kinds && !entry.has_kind(CausalNetKind::CauseEffect) {
            Some(RejectReason::MissingKind(CausalNetKind::CauseEffect))
        } else if policy.require_both_kinds && !entry.has_kind(CausalNetKind::Counterfactual) {
            Some(RejectReason::MissingKind(CausalNetKind::Counterfactual))
        } else if policy.drop_duplicates {
            seen.get(&context_key(&entry.context))
                .map(|of| RejectReason::Duplicate { of: of.clone() })
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(Rejected {
                entry: entry.clone(),
                reason,
            }),
            None => {
                seen.entry(context_key(&entry.context))
                    .or_insert_with(|| entry.id.clone());
                kept.push(entry.clone());
            }
        }
    }
    (kept, rejected)
}

pub fn emit_generation_prompt() -> &'static str {
    GENERATION_PROMPT
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub entry_count: usize,
    pub question_count: usize,
    pub cause_effect_questions: usize,
    pub counterfactual_questions: usize,
    pub mean_choices_per_question: f64,
    /// Entries whose normalized context repeats an earlier entry's.
    pub duplicate_contexts: usize,
}

pub fn stats(entries: &[CausalNetEntry]) -> CorpusStats {
    let questions = entries.iter().flat_map(|e| &e.questions);
    let question_count = questions.clone().count();
    let choice_total: usize = questions.clone().map(|q| q.choices.len()).sum();
    let mut seen = HashSet::new();
    let duplicate_contexts = entries
        .iter()
        .filter(|e| !seen.insert(context_key(&e.context)))
        .count();
    CorpusStats {
        entry_count: entries.len(),
        question_count,
        cause_effect_questions: questions
            .clone()
            .filter(|q| q.kind == CausalNetKind::CauseEffect)
            .count(),
        counterfactual_questions: questions
            .filter(|q| q.kind == CausalNetKind::Counterfactual)
            .count(),
        mean_choices_per_question: if question_count == 0 {
            0.0
        } else {
            choice_total as f64 / question_count as f64
        },
        duplicate_contexts,
    }
}

/// One item per question, ids `<entry id>#q<k>` with `k` starting at 1.
pub fn to_causal_items(entries: &[CausalNetEntry]) -> Vec<CausalItem> {
    entries
        .iter()
        .flat_map(|entry| {
            entry.questions.iter().enumerate().map(move |(k, q)| CausalItem {
                id: format!("{}#q{}", entry.id, k + 1),
                task: Task::CausalIdentification,
                context: entry.context.clone(),
                question: q.text.clone(),
                question_kind: q.kind.into(),
                choices: q.choices.clone(),
                gold: q.answer,
            })
        })
        .collect()
}
