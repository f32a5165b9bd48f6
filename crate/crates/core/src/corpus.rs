//! Canonical benchmark item model, the line-delimited dataset loaders, and
//! seeded train/test splitting.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::causalnet;

/// Question prepended to COPA items whose `asks-for` field is `cause`.
pub const COPA_CAUSE_QUESTION: &str = "What was the CAUSE of this?";
/// Question prepended to COPA items whose `asks-for` field is `effect`.
pub const COPA_EFFECT_QUESTION: &str = "What happened as a RESULT?";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    Ratio(f64),
    #[error("cannot split an empty item list")]
    EmptySplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    CausalDiscovery,
    CausalIdentification,
    CounterfactualReasoning,
}

impl Task {
    /// Experiment label used in report rows.
    pub fn experiment_name(self) -> &'static str {
        match self {
            Task::CausalDiscovery => "Causal Discovery",
            Task::CausalIdentification => "Causal Reasoning Identification",
            Task::CounterfactualReasoning => "Counterfactual Reasoning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKind {
    CauseEffect,
    Counterfactual,
    Plausibility,
}

/// One multiple-choice benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalItem {
    pub id: String,
    pub task: Task,
    pub context: String,
    #[serde(default)]
    pub question: String,
    pub question_kind: QuestionKind,
    pub choices: Vec<String>,
    pub gold: usize,
}

impl CausalItem {
    /// Checks the item invariants: non-empty context, at least two pairwise
    /// distinct choices, and a gold index inside the choice list.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.context.trim().is_empty() {
            return Err("empty context".into());
        }
        if self.choices.len() < 2 {
            return Err(format!("need at least 2 choices, got {}", self.choices.len()));
        }
        if self.gold >= self.choices.len() {
            return Err(format!(
                "gold index {} out of range for {} choices",
                self.gold,
                self.choices.len()
            ));
        }
        let mut seen = HashSet::new();
        for choice in &self.choices {
            let norm = normalize_text(choice);
            if norm.is_empty() {
                return Err("empty choice".into());
            }
            if !seen.insert(norm) {
                return Err(format!("duplicate choice `{choice}`"));
            }
        }
        Ok(())
    }

    pub fn gold_text(&self) -> &str {
        &self.choices[self.gold]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    Copa,
    ECare,
    CLadder,
    Com2Sense,
    TimeTravel,
    CausalNet,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [
        DatasetName::Copa,
        DatasetName::ECare,
        DatasetName::CLadder,
        DatasetName::Com2Sense,
        DatasetName::TimeTravel,
        DatasetName::CausalNet,
    ];

    pub fn task(self) -> Task {
        match self {
            DatasetName::Copa | DatasetName::ECare => Task::CausalDiscovery,
            DatasetName::CLadder | DatasetName::Com2Sense | DatasetName::CausalNet => {
                Task::CausalIdentification
            }
            DatasetName::TimeTravel => Task::CounterfactualReasoning,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DatasetName::Copa => "COPA",
            DatasetName::ECare => "e-CARE",
            DatasetName::CLadder => "CLadder",
            DatasetName::Com2Sense => "Com2Sense",
            DatasetName::TimeTravel => "TimeTravel",
            DatasetName::CausalNet => "CausalNet",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for DatasetName {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "copa" => Ok(DatasetName::Copa),
            "ecare" => Ok(DatasetName::ECare),
            "cladder" => Ok(DatasetName::CLadder),
            "com2sense" => Ok(DatasetName::Com2Sense),
            "timetravel" => Ok(DatasetName::TimeTravel),
            "causalnet" => Ok(DatasetName::CausalNet),
            _ => Err(CorpusError::UnknownDataset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetDescriptor {
    pub name: DatasetName,
    pub path: PathBuf,
}

impl DatasetDescriptor {
    pub fn new(name: DatasetName, path: impl Into<PathBuf>) -> Self {
        Self {
            name,
            path: path.into(),
        }
    }

    pub fn task(&self) -> Task {
        self.name.task()
    }
}

/// Trims, and collapses every internal whitespace run to a single space.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn load_dataset(desc: &DatasetDescriptor) -> Result<Vec<CausalItem>, CorpusError> {
    let text = std::fs::read_to_string(&desc.path).map_err(|source| CorpusError::Io {
        path: desc.path.clone(),
        source,
    })?;
    parse_dataset(desc.name, &text)
}

/// Parses dataset text in the line-delimited record format. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_dataset(name: DatasetName, text: &str) -> Result<Vec<CausalItem>, CorpusError> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |reason: String| CorpusError::Record {
            line: line_no,
            reason,
        };
        let value: Value =
            serde_json::from_str(line).map_err(|e| record_err(format!("invalid JSON: {e}")))?;
        let parsed = match name {
            DatasetName::CausalNet => {
                let entry = causalnet::validate(&value).map_err(|violations| {
                    record_err(
                        violations
                            .iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join("; "),
                    )
                })?;
                causalnet::to_causal_items(std::slice::from_ref(&entry))
            }
            DatasetName::Copa if value.get("premise").is_some() => {
                vec![copa_native_record(&value, line_no).map_err(record_err)?]
            }
            _ => vec![canonical_record(name.task(), &value).map_err(record_err)?],
        };
        for item in parsed {
            item.validate().map_err(record_err)?;
            if !ids.insert(item.id.clone()) {
                return Err(record_err(format!("duplicate id `{}`", item.id)));
            }
            items.push(item);
        }
    }
    Ok(items)
}

#[derive(Deserialize)]
struct CanonicalRecord {
    id: String,
    context: String,
    #[serde(default)]
    question: String,
    question_kind: QuestionKind,
    choices: Vec<String>,
    gold: usize,
}

fn canonical_record(task: Task, value: &Value) -> Result<CausalItem, String> {
    let rec = CanonicalRecord::deserialize(value).map_err(|e| e.to_string())?;
    Ok(CausalItem {
        id: rec.id,
        task,
        context: normalize_text(&rec.context),
        question: normalize_text(&rec.question),
        question_kind: rec.question_kind,
        choices: rec.choices.iter().map(|c| normalize_text(c)).collect(),
        gold: rec.gold,
    })
}

/// COPA in its native shape: `premise`, `choice1`, `choice2`, an optional
/// `asks-for` of `cause`/`effect`, and a 1-based `label`.
fn copa_native_record(value: &Value, line_no: usize) -> Result<CausalItem, String> {
    let text_field = |key: &str| -> Result<String, String> {
        value
            .get(key)
            .and_then(Value::as_str)
            .map(normalize_text)
            .ok_or_else(|| format!("missing field: {key}"))
    };
    let premise = text_field("premise")?;
    let choices = vec![text_field("choice1")?, text_field("choice2")?];
    let label = value
        .get("label")
        .and_then(Value::as_u64)
        .ok_or_else(|| "missing field: label".to_string())?;
    if label == 0 || label as usize > choices.len() {
        return Err(format!("label {label} out of range 1..={}", choices.len()));
    }
    let asks_for = value
        .get("asks-for")
        .or_else(|| value.get("asks_for"))
        .or_else(|| value.get("question"))
        .and_then(Value::as_str);
    let question = match asks_for {
        Some("cause") => COPA_CAUSE_QUESTION.to_string(),
        Some("effect") => COPA_EFFECT_QUESTION.to_string(),
        Some(other) => return Err(format!("asks-for must be cause or effect, got `{other}`")),
        None => String::new(),
    };
    let id = match value.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => format!("copa-{n}"),
        _ => format!("copa-line{line_no}"),
    };
    Ok(CausalItem {
        id,
        task: Task::CausalDiscovery,
        context: premise,
        question,
        question_kind: QuestionKind::Plausibility,
        choices,
        gold: label as usize - 1,
    })
}

/// Serializes items in the canonical record format, one per line.
pub fn write_items(items: &[CausalItem]) -> String {
    let mut out = String::new();
    for item in items {
        let rec = serde_json::json!({
            "id": item.id,
            "context": item.context,
            "question": item.question,
            "question_kind": item.question_kind,
            "choices": item.choices,
            "gold": item.gold,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<CausalItem>,
    pub test: Vec<CausalItem>,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training items for `n` items at `ratio`, rounding halves up.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Seeded, unstratified shuffle split. Train receives `round(ratio * N)` items.
pub fn split(items: &[CausalItem], ratio: f64, seed: u64) -> Result<DatasetSplit, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::Ratio(ratio));
    }
    if items.is_empty() {
        return Err(CorpusError::EmptySplit);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = train_size(items.len(), ratio);
    let (train_idx, test_idx) = order.split_at(cut);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(train_idx),
        test: pick(test_idx),
        seed,
        ratio,
    })
}

pub fn dataset_path_hint(name: DatasetName, dir: &Path) -> PathBuf {
    let file = match name {
        DatasetName::Copa => "mini_copa.jsonl",
        DatasetName::ECare => "ecare.jsonl",
        DatasetName::CLadder => "cladder.jsonl",
        DatasetName::Com2Sense => "com2sense.jsonl",
        DatasetName::TimeTravel => "timetravel.jsonl",
        DatasetName::CausalNet => "causalnet_sample.jsonl",
    };
    dir.join(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str) -> CausalItem {
        CausalItem {
            id: id.into(),
            task: Task::CausalDiscovery,
            context: "ctx".into(),
            question: String::new(),
            question_kind: QuestionKind::Plausibility,
            choices: vec!["a".into(), "b".into()],
            gold: 0,
        }
    }

    #[test]
    fn copa_native_label_is_one_based() {
        let line = r#"{"premise":"My body cast a shadow over the grass.","choice1":"The sun was rising.","choice2":"The grass was cut.","label":1}"#;
        let items = parse_dataset(DatasetName::Copa, line).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(
            items[0].choices,
            vec!["The sun was rising.".to_string(), "The grass was cut.".to_string()]
        );
        assert_eq!(items[0].gold, 0);
        assert_eq!(items[0].question_kind, QuestionKind::Plausibility);
    }

    #[test]
    fn copa_asks_for_is_folded_into_question() {
        let line = r#"{"id":"c1","premise":"The man broke his toe.","choice1":"He dropped a hammer on his foot.","choice2":"He got a hole in his sock.","asks-for":"cause","label":1}"#;
        let items = parse_dataset(DatasetName::Copa, line).unwrap();
        assert_eq!(items[0].question, COPA_CAUSE_QUESTION);
    }

    #[test]
    fn empty_file_gives_no_items() {
        assert!(parse_dataset(DatasetName::ECare, "").unwrap().is_empty());
        assert!(parse_dataset(DatasetName::ECare, "\n  \n").unwrap().is_empty());
    }

    #[test]
    fn gold_past_choices_is_a_line_error() {
        let text = concat!(
            r#"{"id":"a","context":"x","question_kind":"CauseEffect","choices":["p","q"],"gold":0}"#,
            "\n",
            r#"{"id":"b","context":"x","question_kind":"CauseEffect","choices":["p","q"],"gold":2}"#,
        );
        match parse_dataset(DatasetName::CLadder, text) {
            Err(CorpusError::Record { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("out of range"), "{reason}");
            }
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_choices_after_normalization_rejected() {
        let text = r#"{"id":"a","context":"x","question_kind":"CauseEffect","choices":["p  q","p q"],"gold":0}"#;
        assert!(parse_dataset(DatasetName::CLadder, text).is_err());
    }

    #[test]
    fn unknown_dataset_name() {
        assert!(matches!(
            "imagenet".parse::<DatasetName>(),
            Err(CorpusError::UnknownDataset(_))
        ));
        assert_eq!("e-CARE".parse::<DatasetName>().unwrap(), DatasetName::ECare);
        assert_eq!("copa".parse::<DatasetName>().unwrap(), DatasetName::Copa);
    }

    #[test]
    fn task_mapping_is_fixed() {
        use DatasetName::*;
        assert_eq!(Copa.task(), Task::CausalDiscovery);
        assert_eq!(ECare.task(), Task::CausalDiscovery);
        assert_eq!(CLadder.task(), Task::CausalIdentification);
        assert_eq!(Com2Sense.task(), Task::CausalIdentification);
        assert_eq!(CausalNet.task(), Task::CausalIdentification);
        assert_eq!(TimeTravel.task(), Task::CounterfactualReasoning);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("  heavy   rain "), "heavy rain");
        assert_eq!(normalize_text("flooded."), "flooded.");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("a\t\nb"), "a b");
    }

    #[test]
    fn split_sizes() {
        let items: Vec<_> = (0..100).map(|i| item(&format!("i{i}"))).collect();
        let s = split(&items, 0.75, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (75, 25));
        let train: HashSet<_> = s.train.iter().map(|i| &i.id).collect();
        assert!(s.test.iter().all(|i| !train.contains(&i.id)));

        let again = split(&items, 0.75, 7).unwrap();
        assert_eq!(s, again);

        let four: Vec<_> = (0..4).map(|i| item(&format!("i{i}"))).collect();
        let s = split(&four, 0.75, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3, 1));
    }

    #[test]
    fn split_rounds_half_up() {
        assert_eq!(train_size(10, 0.25), 3);
        assert_eq!(train_size(2, 0.25), 1);
        assert_eq!(train_size(5, 0.5), 3);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let items = vec![item("a")];
        for r in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(split(&items, r, 0), Err(CorpusError::Ratio(_))));
        }
        assert!(matches!(split(&[], 0.5, 0), Err(CorpusError::EmptySplit)));
    }
}
