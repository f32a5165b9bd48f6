//! Context-aware prompt assembly under an estimated-token budget.
//!
//! The user message is laid out in a fixed order:
//!
//! ```text
//! Context: <knowledge statements, highest ranked first>
//! Premise: "<item context>"
//! Question: <question line>
//! Counterfactual statement: <statement>      (one line each)
//! Hypothesis 1: <choice>                      (one line each)
//! Answer with the label only.
//! ```
//!
//! When the estimate exceeds the budget, knowledge statements are dropped
//! from the lowest ranked upward, then counterfactuals from the last one
//! backward. The premise, question, choices and instruction always stay.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CausalItem, QuestionKind};
use crate::knowledge::{extract_concepts, ContextBundle};

pub const DEFAULT_SYSTEM_TEXT: &str = "You are a careful causal reasoner.";
pub const DEFAULT_BUDGET: usize = 1024;
pub const INSTRUCTION_LINE: &str = "Answer with the label only.";
pub const COUNTERFACTUAL_PREFIX: &str = "Counterfactual statement: ";
const PLAUSIBILITY_QUESTION: &str = "Given the premise, which hypothesis seems more plausible";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("token budget {budget} is below the irreducible prompt size {needed} (short by {shortfall})")]
    Budget {
        budget: usize,
        needed: usize,
        shortfall: usize,
    },
    #[error("letter labels support at most 26 choices, got {0}")]
    TooManyChoices(usize),
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStyle {
    /// `Hypothesis 1`, `Hypothesis 2`, ...
    #[default]
    Hypothesis,
    /// `A)`, `B)`, ...
    Letter,
}

impl LabelStyle {
    pub fn labels(self, n: usize) -> Result<Vec<String>, PromptError> {
        match self {
            LabelStyle::Hypothesis => Ok((1..=n).map(|i| format!("Hypothesis {i}")).collect()),
            LabelStyle::Letter => {
                if n > 26 {
                    return Err(PromptError::TooManyChoices(n));
                }
                Ok((b'A'..).take(n).map(|c| format!("{})", c as char)).collect())
            }
        }
    }

    /// Guesses the style from labels produced by [`LabelStyle::labels`].
    pub fn infer(labels: &[String]) -> Self {
        if labels.iter().all(|l| l.starts_with("Hypothesis")) {
            LabelStyle::Hypothesis
        } else {
            LabelStyle::Letter
        }
    }

    fn choice_line(self, label: &str, choice: &str) -> String {
        match self {
            LabelStyle::Hypothesis => format!("{label}: {choice}"),
            LabelStyle::Letter => format!("{label} {choice}"),
        }
    }
}

impl FromStr for LabelStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hypothesis" => Ok(LabelStyle::Hypothesis),
            "letter" => Ok(LabelStyle::Letter),
            other => Err(format!("unknown label style `{other}` (expected hypothesis or letter)")),
        }
    }
}

impl fmt::Display for LabelStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelStyle::Hypothesis => "hypothesis",
            LabelStyle::Letter => "letter",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStyle {
    pub label_style: LabelStyle,
    pub system_text: String,
}

impl Default for PromptStyle {
    fn default() -> Self {
        Self {
            label_style: LabelStyle::Hypothesis,
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
        }
    }
}

/// Which pipeline components feed the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_cki: bool,
    pub use_cre: bool,
}

impl AblationFlags {
    pub const ALL_ON: Self = Self {
        use_cki: true,
        use_cre: true,
    };
    pub const ALL_OFF: Self = Self {
        use_cki: false,
        use_cre: false,
    };

    /// The four single-variable settings, all-on first.
    pub fn grid() -> [Self; 4] {
        [
            Self::ALL_ON,
            Self {
                use_cki: true,
                use_cre: false,
            },
            Self {
                use_cki: false,
                use_cre: true,
            },
            Self::ALL_OFF,
        ]
    }

    pub fn tag(self) -> &'static str {
        match (self.use_cki, self.use_cre) {
            (true, true) => "all",
            (true, false) => "no-cre",
            (false, true) => "no-cki",
            (false, false) => "none",
        }
    }

    pub fn needs_knowledge(self) -> bool {
        self.use_cki || self.use_cre
    }
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::ALL_ON
    }
}

impl FromStr for AblationFlags {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::grid()
            .into_iter()
            .find(|f| f.tag() == s.trim())
            .ok_or_else(|| format!("unknown flags `{s}` (expected all, no-cre, no-cki or none)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPackage {
    pub system_text: String,
    pub user_text: String,
    pub labels: Vec<String>,
    pub label_to_index: BTreeMap<String, usize>,
    pub token_estimate: usize,
    pub premise: String,
    pub question_line: String,
    pub choices: Vec<String>,
    /// Knowledge statements that survived the budget, in rank order.
    pub knowledge: Vec<String>,
    /// Counterfactual statements that survived the budget.
    pub counterfactuals: Vec<String>,
    pub dropped_statements: usize,
    pub dropped_counterfactuals: usize,
    pub flags: AblationFlags,
}

impl PromptPackage {
    pub fn full_text(&self) -> String {
        format!("{}{}", self.system_text, self.user_text)
    }
}

fn pluralize(word: &str) -> String {
    let ends = |s: &str| word.ends_with(s);
    if ends("s") || ends("x") || ends("z") || ends("ch") || ends("sh") {
        format!("{word}es")
    } else if let Some(stem) = word.strip_suffix('y').filter(|s| !s.ends_with(['a', 'e', 'i', 'o', 'u'])) {
        format!("{stem}ies")
    } else {
        format!("{word}s")
    }
}

/// The premise concept linked to the highest-ranked knowledge edge, if any.
fn topic(item: &CausalItem, bundle: &ContextBundle) -> Option<String> {
    let premise: Vec<String> = extract_concepts(&item.context)
        .into_iter()
        .map(|c| c.lemma)
        .collect();
    bundle.edges().find_map(|edge| {
        [&edge.start, &edge.end]
            .into_iter()
            .find(|c| premise.contains(&c.lemma))
            .map(|c| pluralize(&c.surface()))
    })
}

fn question_line(item: &CausalItem, bundle: &ContextBundle) -> String {
    match item.question_kind {
        QuestionKind::Plausibility => {
            let ask = match topic(item, bundle) {
                Some(t) => format!("{PLAUSIBILITY_QUESTION} based on the understanding of {t}?"),
                None => format!("{PLAUSIBILITY_QUESTION}?"),
            };
            if item.question.is_empty() {
                ask
            } else {
                format!("{} {ask}", item.question)
            }
        }
        _ if item.question.is_empty() => format!("{PLAUSIBILITY_QUESTION}?"),
        _ => item.question.clone(),
    }
}

struct Layout<'a> {
    premise_line: String,
    question_line: String,
    choice_lines: Vec<String>,
    knowledge: &'a [String],
    counterfactuals: &'a [String],
}

impl Layout<'_> {
    fn render(&self, n_knowledge: usize, n_counterfactual: usize) -> String {
        let mut lines: Vec<String> = Vec::new();
        if n_knowledge > 0 {
            lines.push(format!("Context: {}", self.knowledge[..n_knowledge].join(" ")));
        }
        lines.push(self.premise_line.clone());
        lines.push(self.question_line.clone());
        for cf in &self.counterfactuals[..n_counterfactual] {
            lines.push(format!("{COUNTERFACTUAL_PREFIX}{cf}"));
        }
        lines.extend(self.choice_lines.iter().cloned());
        lines.push(INSTRUCTION_LINE.to_string());
        lines.join("\n")
    }
}

/// Assembles the prompt for `item` from everything in `bundle`.
pub fn assemble(
    item: &CausalItem,
    bundle: &ContextBundle,
    budget: usize,
    style: &PromptStyle,
) -> Result<PromptPackage, PromptError> {
    build(item, bundle, budget, style, AblationFlags::ALL_ON)
}

/// Assembles with knowledge statements and/or counterfactuals suppressed.
pub fn render_ablation(
    item: &CausalItem,
    bundle: &ContextBundle,
    flags: AblationFlags,
    budget: usize,
    style: &PromptStyle,
) -> Result<PromptPackage, PromptError> {
    let mut effective = bundle.clone();
    if !flags.use_cki {
        effective = effective.without_statements();
    }
    if !flags.use_cre {
        effective = effective.without_counterfactuals();
    }
    build(item, &effective, budget, style, flags)
}

fn build(
    item: &CausalItem,
    bundle: &ContextBundle,
    budget: usize,
    style: &PromptStyle,
    flags: AblationFlags,
) -> Result<PromptPackage, PromptError> {
    let labels = style.label_style.labels(item.choices.len())?;
    let question_line = question_line(item, bundle);
    let layout = Layout {
        premise_line: format!("Premise: \"{}\"", item.context),
        question_line: format!("Question: {question_line}"),
        choice_lines: labels
            .iter()
            .zip(&item.choices)
            .map(|(label, choice)| style.label_style.choice_line(label, choice))
            .collect(),
        knowledge: &bundle.statements,
        counterfactuals: &bundle.counterfactuals,
    };
    let cost = |user: &str| estimate_tokens(&format!("{}{user}", style.system_text));

    let core = layout.render(0, 0);
    let needed = cost(&core);
    if needed > budget {
        return Err(PromptError::Budget {
            budget,
            needed,
            shortfall: needed - budget,
        });
    }

    let mut n_knowledge = bundle.statements.len();
    let mut n_counterfactual = bundle.counterfactuals.len();
    let mut user_text = layout.render(n_knowledge, n_counterfactual);
    while cost(&user_text) > budget {
        if n_knowledge > 0 {
            n_knowledge -= 1;
        } else {
            n_counterfactual -= 1;
        }
        user_text = layout.render(n_knowledge, n_counterfactual);
    }

    Ok(PromptPackage {
        token_estimate: cost(&user_text),
        system_text: style.system_text.clone(),
        user_text,
        label_to_index: labels.iter().cloned().zip(0..).collect(),
        labels,
        premise: item.context.clone(),
        question_line,
        choices: item.choices.clone(),
        knowledge: bundle.statements[..n_knowledge].to_vec(),
        counterfactuals: bundle.counterfactuals[..n_counterfactual].to_vec(),
        dropped_statements: bundle.statements.len() - n_knowledge,
        dropped_counterfactuals: bundle.counterfactuals.len() - n_counterfactual,
        flags,
    })
}

/// Labels of the choice lines in a rendered user message, in order.
pub fn parse_labels(user_text: &str) -> Vec<String> {
    user_text
        .lines()
        .filter_map(|line| {
            if let Some(rest) = line.strip_prefix("Hypothesis ") {
                let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
                if !digits.is_empty() && rest[digits.len()..].starts_with(": ") {
                    return Some(format!("Hypothesis {digits}"));
                }
            }
            let mut chars = line.chars();
            match (chars.next(), chars.next(), chars.next()) {
                (Some(c), Some(')'), Some(' ')) if c.is_ascii_uppercase() => Some(format!("{c})")),
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;
    use crate::counterfactual::{attach, Counterfactual, TemplateKind};
    use crate::knowledge::{verbalize, KnowledgeEdge, Provenance, Relation};

    fn shadow_item() -> CausalItem {
        CausalItem {
            id: "copa-shadow".into(),
            task: Task::CausalDiscovery,
            context: "My body cast a shadow over the grass.".into(),
            question: "What was the CAUSE of this?".into(),
            question_kind: QuestionKind::Plausibility,
            choices: vec!["The sun was rising.".into(), "The grass was cut.".into()],
            gold: 0,
        }
    }

    fn shadow_bundle() -> ContextBundle {
        let edge = KnowledgeEdge::new("shadow", Relation::HasPrerequisite, "light_source", 2.0);
        let knowledge = ContextBundle {
            statements: vec![verbalize(&edge)],
            counterfactuals: vec![],
            provenance: vec![Provenance::Edge(edge)],
        };
        attach(
            &knowledge,
            &[Counterfactual {
                template_id: "irrelevance_probe".into(),
                kind: TemplateKind::IrrelevanceProbe,
                text: "If the grass were different, shadow would be unaffected.".into(),
            }],
        )
    }

    #[test]
    fn token_estimate_formula() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("hello world"), 3);
        assert_eq!(estimate_tokens(&"x".repeat(400)), 100);
        assert_eq!(estimate_tokens("ééé"), 1);
    }

    #[test]
    fn shadow_prompt_layout() {
        let pkg = assemble(&shadow_item(), &shadow_bundle(), 1024, &PromptStyle::default()).unwrap();
        assert!(pkg
            .question_line
            .ends_with("which hypothesis seems more plausible based on the understanding of shadows?"));
        assert_eq!(pkg.labels, ["Hypothesis 1", "Hypothesis 2"]);
        let lines: Vec<&str> = pkg.user_text.lines().collect();
        assert_eq!(
            lines,
            [
                "Context: Shadow requires light source.",
                "Premise: \"My body cast a shadow over the grass.\"",
                "Question: What was the CAUSE of this? Given the premise, which hypothesis seems more plausible based on the understanding of shadows?",
                "Counterfactual statement: If the grass were different, shadow would be unaffected.",
                "Hypothesis 1: The sun was rising.",
                "Hypothesis 2: The grass was cut.",
                "Answer with the label only.",
            ]
        );
        assert_eq!(pkg.token_estimate, estimate_tokens(&pkg.full_text()));
        assert_eq!(parse_labels(&pkg.user_text), pkg.labels);
    }

    #[test]
    fn empty_bundle_is_core_only() {
        let pkg = assemble(&shadow_item(), &ContextBundle::default(), 1024, &PromptStyle::default()).unwrap();
        assert_eq!(pkg.user_text.lines().count(), 5);
        assert!(!pkg.user_text.contains("Context:"));
        assert!(!pkg.user_text.contains(COUNTERFACTUAL_PREFIX));
        assert!(pkg.question_line.ends_with("seems more plausible?"));
    }

    #[test]
    fn infeasible_budget_names_shortfall() {
        let err = assemble(&shadow_item(), &shadow_bundle(), 1, &PromptStyle::default()).unwrap_err();
        let PromptError::Budget { budget, needed, shortfall } = err else {
            panic!("expected budget error");
        };
        assert_eq!(budget, 1);
        assert_eq!(shortfall, needed - 1);
    }

    #[test]
    fn statements_drop_before_counterfactuals() {
        let item = shadow_item();
        let bundle = shadow_bundle();
        let style = PromptStyle::default();
        let full = assemble(&item, &bundle, 4096, &style).unwrap();
        let Err(PromptError::Budget { needed, .. }) = assemble(&item, &bundle, 1, &style) else {
            panic!("expected budget error");
        };
        let pkg = assemble(&item, &bundle, full.token_estimate - 1, &style).unwrap();
        assert_eq!((pkg.dropped_statements, pkg.dropped_counterfactuals), (1, 0));
        let pkg = assemble(&item, &bundle, needed, &style).unwrap();
        assert_eq!((pkg.dropped_statements, pkg.dropped_counterfactuals), (1, 1));
    }

    #[test]
    fn ablation_identities() {
        let item = shadow_item();
        let bundle = shadow_bundle();
        let style = PromptStyle::default();
        let on = render_ablation(&item, &bundle, AblationFlags::ALL_ON, 1024, &style).unwrap();
        assert_eq!(on, assemble(&item, &bundle, 1024, &style).unwrap());

        let off = render_ablation(&item, &bundle, AblationFlags::ALL_OFF, 1024, &style).unwrap();
        let empty = assemble(&item, &ContextBundle::default(), 1024, &style).unwrap();
        assert_eq!(off.user_text, empty.user_text);
        assert_eq!(off.flags, AblationFlags::ALL_OFF);

        let no_cre = AblationFlags {
            use_cki: true,
            use_cre: false,
        };
        let pkg = render_ablation(&item, &bundle, no_cre, 1024, &style).unwrap();
        assert!(!pkg.user_text.contains(COUNTERFACTUAL_PREFIX));
        assert!(pkg.user_text.starts_with("Context: "));
    }

    #[test]
    fn letter_style_labels() {
        let style = PromptStyle {
            label_style: LabelStyle::Letter,
            ..Default::default()
        };
        let pkg = assemble(&shadow_item(), &ContextBundle::default(), 1024, &style).unwrap();
        assert_eq!(pkg.labels, ["A)", "B)"]);
        assert!(pkg.user_text.contains("\nA) The sun was rising.\nB) The grass was cut.\n"));
        assert_eq!(parse_labels(&pkg.user_text), pkg.labels);
        assert_eq!(pkg.label_to_index["B)"], 1);
        assert_eq!(LabelStyle::infer(&pkg.labels), LabelStyle::Letter);
        assert!(LabelStyle::Letter.labels(27).is_err());
    }

    #[test]
    fn flags_round_trip_through_tags() {
        for flags in AblationFlags::grid() {
            assert_eq!(flags.tag().parse::<AblationFlags>().unwrap(), flags);
        }
        assert!("some".parse::<AblationFlags>().is_err());
    }

    #[test]
    fn plural_forms() {
        assert_eq!(pluralize("shadow"), "shadows");
        assert_eq!(pluralize("berry"), "berries");
        assert_eq!(pluralize("day"), "days");
        assert_eq!(pluralize("glass"), "glasses");
    }
}
