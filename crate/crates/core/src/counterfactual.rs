//! Counterfactual enhancement: deterministic "what-if" statements built from
//! the top-ranked knowledge edges of an item's context bundle.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, CausalItem};
use crate::knowledge::{capitalize, Concept, ContextBundle, KnowledgeEdge, Provenance, Relation};

pub const SLOTS: [&str; 4] = ["cause", "effect", "context", "unrelated"];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template line {line}: {reason}")]
    Line { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateKind {
    CauseNegation,
    AlternativeMechanism,
    IrrelevanceProbe,
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "CauseNegation" => Ok(TemplateKind::CauseNegation),
            "AlternativeMechanism" => Ok(TemplateKind::AlternativeMechanism),
            "IrrelevanceProbe" => Ok(TemplateKind::IrrelevanceProbe),
            other => Err(format!("unknown template kind `{other}`")),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualTemplate {
    pub id: String,
    pub kind: TemplateKind,
    pub pattern: String,
}

/// Slot names referenced by `{name}` in a pattern.
fn pattern_slots(pattern: &str) -> Result<Vec<&str>, String> {
    let mut slots = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| "unclosed `{` in pattern".to_string())?;
        let name = &after[..close];
        if !SLOTS.contains(&name) {
            return Err(format!("unknown slot `{{{name}}}`"));
        }
        slots.push(name);
        rest = &after[close + 1..];
    }
    Ok(slots)
}

impl CounterfactualTemplate {
    pub fn new(id: &str, kind: TemplateKind, pattern: &str) -> Result<Self, String> {
        if id.trim().is_empty() {
            return Err("empty template id".into());
        }
        if pattern_slots(pattern)?.is_empty() {
            return Err(format!("template `{id}` has no slot"));
        }
        Ok(Self {
            id: id.to_string(),
            kind,
            pattern: pattern.to_string(),
        })
    }

    fn fill(&self, slots: &SlotValues) -> Option<String> {
        let mut out = self.pattern.clone();
        for name in pattern_slots(&self.pattern).ok()? {
            let value = match name {
                "cause" => slots.cause.as_deref(),
                "effect" => slots.effect.as_deref(),
                "context" => slots.context.as_deref(),
                "unrelated" => slots.unrelated.as_deref(),
                _ => None,
            }?;
            out = out.replace(&format!("{{{name}}}"), value);
        }
        Some(capitalize(&out))
    }
}

#[derive(Default)]
struct SlotValues {
    cause: Option<String>,
    effect: Option<String>,
    context: Option<String>,
    unrelated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: Vec<CounterfactualTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        let builtin = [
            (
                "cause_negation",
                TemplateKind::CauseNegation,
                "If there had been no {cause}, would {effect} still have occurred?",
            ),
            (
                "alternative_mechanism",
                TemplateKind::AlternativeMechanism,
                "If {cause} had been prevented, could {effect} still have come about some other way?",
            ),
            (
                "irrelevance_probe",
                TemplateKind::IrrelevanceProbe,
                "If {unrelated} were different, {effect} would be unaffected.",
            ),
        ];
        Self {
            templates: builtin
                .into_iter()
                .map(|(id, kind, p)| CounterfactualTemplate::new(id, kind, p).expect("builtin"))
                .collect(),
        }
    }
}

impl TemplateRegistry {
    pub fn new(templates: Vec<CounterfactualTemplate>) -> Result<Self, String> {
        let mut ids = HashSet::new();
        for t in &templates {
            if !ids.insert(t.id.as_str()) {
                return Err(format!("duplicate template id `{}`", t.id));
            }
        }
        Ok(Self { templates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `id<TAB>kind<TAB>pattern` lines; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut templates = Vec::new();
        let mut last_line = 0;
        for (idx, line) in text.lines().enumerate() {
            last_line = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| TemplateError::Line {
                line: idx + 1,
                reason,
            };
            let mut fields = line.splitn(3, '\t');
            let (Some(id), Some(kind), Some(pattern)) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(err("expected id<TAB>kind<TAB>pattern".into()));
            };
            let kind: TemplateKind = kind.parse().map_err(err)?;
            templates.push(CounterfactualTemplate::new(id.trim(), kind, pattern.trim()).map_err(err)?);
        }
        Self::new(templates).map_err(|reason| TemplateError::Line {
            line: last_line,
            reason,
        })
    }

    pub fn templates(&self) -> &[CounterfactualTemplate] {
        &self.templates
    }

    pub fn first(&self, kind: TemplateKind) -> Option<&CounterfactualTemplate> {
        self.templates.iter().find(|t| t.kind == kind)
    }
}

/// One generated statement and the template that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub template_id: String,
    pub kind: TemplateKind,
    pub text: String,
}

fn fold(text: &str) -> String {
    normalize_text(text).to_lowercase()
}

/// True when `statement` contains the full text of any of the item's
/// choices. Checked against every choice so that filtering reveals nothing
/// about which one is gold.
pub fn leaks_choice(item: &CausalItem, statement: &str) -> bool {
    let hay = fold(statement);
    item.choices.iter().any(|choice| {
        let needle = fold(choice);
        let needle = needle.trim_end_matches(['.', '!', '?']);
        !needle.is_empty() && hay.contains(needle)
    })
}

fn sentence_body(text: &str) -> String {
    normalize_text(text)
        .trim_end_matches(['.', '!', '?'])
        .to_string()
}

/// A prerequisite is the cause of the thing that requires it; every other
/// causal-strong relation points from cause to effect.
fn cause_and_effect(edge: &KnowledgeEdge) -> (&Concept, &Concept) {
    match edge.relation {
        Relation::HasPrerequisite => (&edge.end, &edge.start),
        _ => (&edge.start, &edge.end),
    }
}

/// Generates up to `max_count` counterfactual statements.
///
/// Order: cause negation on the top causal-strong edge, an alternative
/// mechanism on the second one, then an irrelevance probe when the bundle
/// has a causal-weak edge. Slots come only from bundle edges, never from
/// the choices.
pub fn generate_counterfactuals(
    item: &CausalItem,
    bundle: &ContextBundle,
    registry: &TemplateRegistry,
    max_count: usize,
) -> Vec<Counterfactual> {
    if max_count == 0 {
        return Vec::new();
    }
    let strong: Vec<&KnowledgeEdge> = bundle
        .edges()
        .filter(|e| e.relation.is_causal_strong())
        .collect();
    let Some(top) = strong.first() else {
        return Vec::new();
    };
    let context = Some(sentence_body(&item.context));
    let slots_for = |edge: &KnowledgeEdge| {
        let (cause, effect) = cause_and_effect(edge);
        SlotValues {
            cause: Some(cause.surface()),
            effect: Some(effect.surface()),
            context: context.clone(),
            unrelated: None,
        }
    };

    let mut planned: Vec<(TemplateKind, SlotValues)> =
        vec![(TemplateKind::CauseNegation, slots_for(top))];
    if let Some(second) = strong.get(1) {
        planned.push((TemplateKind::AlternativeMechanism, slots_for(second)));
    }
    let anchors = [&top.start.lemma, &top.end.lemma];
    let unrelated = bundle
        .edges()
        .filter(|e| !e.relation.is_causal_strong())
        .find_map(|e| {
            [&e.end, &e.start]
                .into_iter()
                .find(|c| !anchors.contains(&&c.lemma))
                .map(|c| c.surface())
        });
    if let Some(unrelated) = unrelated {
        let mut slots = slots_for(top);
        slots.unrelated = Some(unrelated);
        planned.push((TemplateKind::IrrelevanceProbe, slots));
    }

    let mut out: Vec<Counterfactual> = Vec::new();
    for (kind, slots) in planned {
        if out.len() >= max_count {
            break;
        }
        let Some(template) = registry.first(kind) else {
            continue;
        };
        let Some(text) = template.fill(&slots) else {
            continue;
        };
        if leaks_choice(item, &text) || out.iter().any(|c| c.text == text) {
            continue;
        }
        out.push(Counterfactual {
            template_id: template.id.clone(),
            kind,
            text,
        });
    }
    out
}

/// Replaces the bundle's counterfactuals, keeping its knowledge statements
/// and their provenance.
pub fn attach(bundle: &ContextBundle, statements: &[Counterfactual]) -> ContextBundle {
    let mut out = bundle.without_counterfactuals();
    out.counterfactuals = statements.iter().map(|c| c.text.clone()).collect();
    out.provenance.extend(
        statements
            .iter()
            .map(|c| Provenance::Template(c.template_id.clone())),
    );
    out
}

/// Optional rewrite of template output into more natural phrasing.
pub trait CounterfactualRewriter: Send + Sync {
    fn rewrite(&self, item: &CausalItem, statement: &Counterfactual) -> Option<String>;
}

/// Applies `rewriter`, keeping the template text whenever the rewrite fails,
/// comes back empty, or would leak a choice.
pub fn rewrite_all(
    item: &CausalItem,
    statements: Vec<Counterfactual>,
    rewriter: &dyn CounterfactualRewriter,
) -> Vec<Counterfactual> {
    statements
        .into_iter()
        .map(|cf| match rewriter.rewrite(item, &cf) {
            Some(text) if !text.trim().is_empty() && !leaks_choice(item, &text) => Counterfactual {
                text: normalize_text(&text),
                ..cf
            },
            _ => cf,
        })
        .collect()
}
