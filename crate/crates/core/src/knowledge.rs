//! Contextual knowledge integration: concept extraction, ConceptNet edge
//! retrieval and verbalization of the top-ranked edges into context
//! statements.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::CausalItem;
use crate::lexicon;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
    #[error("knowledge endpoint transport error (retryable): {0}")]
    Transport(String),
    #[error("knowledge endpoint returned an unreadable response: {0}")]
    Response(String),
}

impl KnowledgeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, KnowledgeError::Transport(_))
    }
}

/// A ConceptNet-style concept: lowercase, phrases joined by underscores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Concept {
    pub lemma: String,
    /// Char range of the first occurrence in the origin text, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<(usize, usize)>,
}

impl Concept {
    /// Builds a concept from free text, lowercasing and joining words with
    /// underscores. Returns `None` when nothing remains.
    pub fn new(text: &str) -> Option<Self> {
        let lemma = text
            .split(|c: char| c.is_whitespace() || c == '_')
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join("_");
        if lemma.is_empty() {
            None
        } else {
            Some(Self {
                lemma,
                source_span: None,
            })
        }
    }

    /// Lemma with underscores rendered as spaces.
    pub fn surface(&self) -> String {
        self.lemma.replace('_', " ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Causes,
    CapableOf,
    HasSubevent,
    HasPrerequisite,
    CausesDesire,
    MotivatedByGoal,
    Entails,
    UsedFor,
    RelatedTo,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::Causes,
        Relation::CapableOf,
        Relation::HasSubevent,
        Relation::HasPrerequisite,
        Relation::CausesDesire,
        Relation::MotivatedByGoal,
        Relation::Entails,
        Relation::UsedFor,
        Relation::RelatedTo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Causes => "Causes",
            Relation::CapableOf => "CapableOf",
            Relation::HasSubevent => "HasSubevent",
            Relation::HasPrerequisite => "HasPrerequisite",
            Relation::CausesDesire => "CausesDesire",
            Relation::MotivatedByGoal => "MotivatedByGoal",
            Relation::Entails => "Entails",
            Relation::UsedFor => "UsedFor",
            Relation::RelatedTo => "RelatedTo",
        }
    }

    /// Strong relations carry direct causal signal; weak ones only fill
    /// remaining context slots.
    pub fn is_causal_strong(self) -> bool {
        matches!(
            self,
            Relation::Causes
                | Relation::CapableOf
                | Relation::HasSubevent
                | Relation::HasPrerequisite
                | Relation::Entails
        )
    }

    fn phrase(self) -> &'static str {
        match self {
            Relation::Causes => "causes",
            Relation::CapableOf => "is capable of",
            Relation::HasPrerequisite => "requires",
            Relation::HasSubevent => "involves",
            Relation::Entails => "entails",
            Relation::CausesDesire => "makes one want",
            Relation::MotivatedByGoal => "is motivated by",
            Relation::UsedFor => "is used for",
            Relation::RelatedTo => "is related to",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relation names outside the allow-list, e.g. `/r/IsA`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsupportedRelation(pub String);

impl FromStr for Relation {
    type Err = UnsupportedRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bare = s.trim().trim_start_matches("/r/");
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == bare)
            .ok_or_else(|| UnsupportedRelation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub start: Concept,
    pub relation: Relation,
    pub end: Concept,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

impl KnowledgeEdge {
    pub fn new(start: &str, relation: Relation, end: &str, weight: f64) -> Self {
        Self {
            start: Concept::new(start).expect("non-empty start"),
            relation,
            end: Concept::new(end).expect("non-empty end"),
            weight,
            surface: None,
        }
    }

    pub fn touches(&self, lemma: &str) -> bool {
        self.start.lemma == lemma || self.end.lemma == lemma
    }

    fn key(&self) -> (&str, Relation, &str) {
        (&self.start.lemma, self.relation, &self.end.lemma)
    }
}

/// Weight descending, then `(start, relation, end)` ascending.
pub fn rank_order(a: &KnowledgeEdge, b: &KnowledgeEdge) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.key().cmp(&b.key()))
}

pub fn extract_concepts(text: &str) -> Vec<Concept> {
    lexicon::content_lemmas(text)
        .into_iter()
        .map(|tok| Concept {
            lemma: tok.text,
            source_span: Some((tok.start, tok.end)),
        })
        .collect()
}

/// Source of raw edges for a concept. Implementations return every edge
/// they hold that touches the lemma; filtering and ranking happen in
/// [`query_edges`].
pub trait KnowledgeStore: Send + Sync {
    fn edges_for(&self, lemma: &str) -> Result<Vec<KnowledgeEdge>, KnowledgeError>;
}

impl<S: KnowledgeStore + ?Sized> KnowledgeStore for Arc<S> {
    fn edges_for(&self, lemma: &str) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
        (**self).edges_for(lemma)
    }
}

/// Edges incident to `concept`, restricted to allow-listed relations, in
/// rank order and truncated to `limit`.
pub fn query_edges(
    concept: &Concept,
    store: &dyn KnowledgeStore,
    limit: usize,
) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
    if limit == 0 {
        return Ok(Vec::new());
    }
    let mut edges: Vec<KnowledgeEdge> = store
        .edges_for(&concept.lemma)?
        .into_iter()
        .filter(|e| e.touches(&concept.lemma) && e.weight >= 0.0)
        .collect();
    edges.sort_by(rank_order);
    edges.dedup_by(|a, b| a.key() == b.key());
    edges.truncate(limit);
    Ok(edges)
}

/// In-memory edge index loaded from a tab-separated snapshot file.
#[derive(Debug, Default, Clone)]
pub struct SnapshotStore {
    by_lemma: HashMap<String, Vec<KnowledgeEdge>>,
    edge_count: usize,
}

impl SnapshotStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `start<TAB>relation<TAB>end<TAB>weight[<TAB>surface]` lines.
    /// Lines starting with `#` and blank lines are skipped, as are edges
    /// whose relation is outside the allow-list.
    pub fn parse(text: &str) -> Result<Self, KnowledgeError> {
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| KnowledgeError::Snapshot {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 4 || fields.len() > 5 {
                return Err(err(format!("expected 4 or 5 fields, got {}", fields.len())));
            }
            let Ok(relation) = fields[1].parse::<Relation>() else {
                continue;
            };
            let start = Concept::new(fields[0]).ok_or_else(|| err("empty start".into()))?;
            let end = Concept::new(fields[2]).ok_or_else(|| err("empty end".into()))?;
            let weight: f64 = fields[3]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad weight `{}`", fields[3])))?;
            if !weight.is_finite() || weight < 0.0 {
                return Err(err(format!("weight must be finite and non-negative, got {weight}")));
            }
            let surface = fields
                .get(4)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            edges.push(KnowledgeEdge {
                start,
                relation,
                end,
                weight,
                surface,
            });
        }
        Ok(Self::from_edges(edges))
    }

    pub fn from_edges(edges: Vec<KnowledgeEdge>) -> Self {
        let mut by_lemma: HashMap<String, Vec<KnowledgeEdge>> = HashMap::new();
        let edge_count = edges.len();
        for edge in edges {
            by_lemma
                .entry(edge.start.lemma.clone())
                .or_default()
                .push(edge.clone());
            if edge.end.lemma != edge.start.lemma {
                by_lemma.entry(edge.end.lemma.clone()).or_default().push(edge);
            }
        }
        Self {
            by_lemma,
            edge_count,
        }
    }

    pub fn len(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.edge_count == 0
    }
}

impl KnowledgeStore for SnapshotStore {
    fn edges_for(&self, lemma: &str) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
        Ok(self.by_lemma.get(lemma).cloned().unwrap_or_default())
    }
}

/// Client for a ConceptNet-compatible REST endpoint (`GET /c/en/<lemma>`).
#[derive(Debug, Clone)]
pub struct ConceptNetClient {
    base_url: String,
    fetch_limit: usize,
    agent: ureq::Agent,
}

impl ConceptNetClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration, fetch_limit: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            fetch_limit,
            agent,
        }
    }

    pub fn url_for(&self, lemma: &str) -> String {
        format!("{}/c/en/{}?limit={}", self.base_url, lemma, self.fetch_limit)
    }
}

impl KnowledgeStore for ConceptNetClient {
    fn edges_for(&self, lemma: &str) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
        let mut response = self
            .agent
            .get(&self.url_for(lemma))
            .call()
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code < 500 && code != 429 => {
                    KnowledgeError::Response(format!("HTTP status {code}"))
                }
                other => KnowledgeError::Transport(other.to_string()),
            })?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| KnowledgeError::Response(e.to_string()))?;
        parse_conceptnet_response(&body)
    }
}

fn english_lemma(node: &Value) -> Option<String> {
    let term = node
        .get("term")
        .or_else(|| node.get("@id"))
        .and_then(Value::as_str)?;
    let mut parts = term.trim_start_matches('/').split('/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("c"), Some("en"), Some(lemma)) if !lemma.is_empty() => Some(lemma.to_lowercase()),
        _ => None,
    }
}

/// Extracts allow-listed edges with English endpoints from a ConceptNet
/// `/c/en/...` JSON document.
pub fn parse_conceptnet_response(body: &Value) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
    let edges = body
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| KnowledgeError::Response("missing `edges` array".into()))?;
    let mut out = Vec::new();
    for edge in edges {
        let rel = edge
            .get("rel")
            .and_then(|r| r.get("label").or_else(|| r.get("@id")))
            .and_then(Value::as_str);
        let Some(Ok(relation)) = rel.map(str::parse::<Relation>) else {
            continue;
        };
        let (Some(start), Some(end)) = (
            edge.get("start").and_then(english_lemma),
            edge.get("end").and_then(english_lemma),
        ) else {
            continue;
        };
        let weight = edge.get("weight").and_then(Value::as_f64).unwrap_or(1.0);
        if !weight.is_finite() || weight < 0.0 {
            continue;
        }
        let surface = edge
            .get("surfaceText")
            .and_then(Value::as_str)
            .map(str::to_string);
        out.push(KnowledgeEdge {
            start: Concept {
                lemma: start,
                source_span: None,
            },
            relation,
            end: Concept {
                lemma: end,
                source_span: None,
            },
            weight,
            surface,
        });
    }
    Ok(out)
}

/// Read-through on-disk cache keyed by concept lemma. A cached file is
/// written once per key, via an atomic rename, under a per-key lock.
pub struct CachedStore<S> {
    inner: S,
    dir: PathBuf,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<S: KnowledgeStore> CachedStore<S> {
    pub fn new(inner: S, dir: impl Into<PathBuf>) -> Result<Self, KnowledgeError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| KnowledgeError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            inner,
            dir,
            key_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn cache_path(&self, lemma: &str) -> PathBuf {
        let safe: String = lemma
            .chars()
            .map(|c| {
                if c.is_alphanumeric() || c == '_' || c == '-' {
                    c
                } else {
                    '%'
                }
            })
            .collect();
        // lemmas differing only in escaped chars must not share a file
        let digest = crate::util::short_hash(lemma);
        self.dir.join(format!("{safe}.{digest}.json"))
    }

    fn read_cached(&self, path: &Path) -> Option<Vec<KnowledgeEdge>> {
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn key_lock(&self, lemma: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(lemma.to_string()).or_default().clone()
    }
}

impl<S: KnowledgeStore> KnowledgeStore for CachedStore<S> {
    fn edges_for(&self, lemma: &str) -> Result<Vec<KnowledgeEdge>, KnowledgeError> {
        let path = self.cache_path(lemma);
        if let Some(edges) = self.read_cached(&path) {
            return Ok(edges);
        }
        let fetched = self.inner.edges_for(lemma)?;
        let lock = self.key_lock(lemma);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        // another caller may have won the race; its value is authoritative
        if let Some(edges) = self.read_cached(&path) {
            return Ok(edges);
        }
        let io_err = |source| KnowledgeError::Io {
            path: path.clone(),
            source,
        };
        let json = serde_json::to_string(&fetched).expect("edges serialize");
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, json).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)?;
        Ok(fetched)
    }
}

/// Turns an edge into one sentence using a fixed template per relation.
pub fn verbalize(edge: &KnowledgeEdge) -> String {
    let sentence = format!(
        "{} {} {}.",
        edge.start.surface(),
        edge.relation.phrase(),
        edge.end.surface()
    );
    capitalize(&sentence)
}

pub(crate) fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Where a bundle line came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Edge(KnowledgeEdge),
    Template(String),
}

/// Verbalized knowledge plus counterfactual statements for one item.
///
/// `provenance` holds one record per statement (edges, in statement order)
/// followed by one record per counterfactual (template ids).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub statements: Vec<String>,
    pub counterfactuals: Vec<String>,
    pub provenance: Vec<Provenance>,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.statements.is_empty() && self.counterfactuals.is_empty()
    }

    /// Source edges of the knowledge statements, in rank order.
    pub fn edges(&self) -> impl Iterator<Item = &KnowledgeEdge> {
        self.provenance.iter().filter_map(|p| match p {
            Provenance::Edge(e) => Some(e),
            Provenance::Template(_) => None,
        })
    }

    pub fn without_statements(&self) -> Self {
        Self {
            statements: Vec::new(),
            counterfactuals: self.counterfactuals.clone(),
            provenance: self
                .provenance
                .iter()
                .filter(|p| matches!(p, Provenance::Template(_)))
                .cloned()
                .collect(),
        }
    }

    pub fn without_counterfactuals(&self) -> Self {
        Self {
            statements: self.statements.clone(),
            counterfactuals: Vec::new(),
            provenance: self
                .provenance
                .iter()
                .filter(|p| matches!(p, Provenance::Edge(_)))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLimits {
    pub k_per_concept: usize,
    pub max_statements: usize,
}

impl Default for ContextLimits {
    fn default() -> Self {
        Self {
            k_per_concept: 3,
            max_statements: 5,
        }
    }
}

/// Concepts of the item's context followed by those of every choice, in
/// first-occurrence order.
pub fn item_concepts(item: &CausalItem) -> Vec<Concept> {
    let mut seen = HashSet::new();
    std::iter::once(item.context.as_str())
        .chain(item.choices.iter().map(String::as_str))
        .flat_map(extract_concepts)
        .filter(|c| seen.insert(c.lemma.clone()))
        .collect()
}

/// Builds the knowledge part of an item's context bundle.
///
/// Causal-strong edges are taken first; weak edges only fill the slots the
/// strong ones leave free. The chosen edges are then emitted in rank order,
/// so statement order is non-increasing in weight.
pub fn build_context(
    item: &CausalItem,
    store: &dyn KnowledgeStore,
    limits: ContextLimits,
) -> Result<ContextBundle, KnowledgeError> {
    let mut candidates: Vec<KnowledgeEdge> = Vec::new();
    for concept in item_concepts(item) {
        for edge in query_edges(&concept, store, limits.k_per_concept)? {
            if !candidates.iter().any(|c| c.key() == edge.key()) {
                candidates.push(edge);
            }
        }
    }
    candidates.sort_by(rank_order);

    let (strong, weak): (Vec<_>, Vec<_>) = candidates
        .into_iter()
        .partition(|e| e.relation.is_causal_strong());
    let mut chosen: Vec<KnowledgeEdge> = Vec::new();
    let mut texts: HashSet<String> = HashSet::new();
    for edge in strong.into_iter().chain(weak) {
        if chosen.len() >= limits.max_statements {
            break;
        }
        if texts.insert(verbalize(&edge)) {
            chosen.push(edge);
        }
    }
    chosen.sort_by(rank_order);

    Ok(ContextBundle {
        statements: chosen.iter().map(verbalize).collect(),
        counterfactuals: Vec::new(),
        provenance: chosen.into_iter().map(Provenance::Edge).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QuestionKind, Task};

    fn names(concepts: &[Concept]) -> Vec<&str> {
        concepts.iter().map(|c| c.lemma.as_str()).collect()
    }

    fn rain_store() -> SnapshotStore {
        SnapshotStore::parse(
            "# fixture\nrain\tCapableOf\tcause_flooding\t2.0\nrain\tRelatedTo\twater\t1.0\n",
        )
        .unwrap()
    }

    fn item(context: &str, choices: &[&str]) -> CausalItem {
        CausalItem {
            id: "t".into(),
            task: Task::CausalDiscovery,
            context: context.into(),
            question: String::new(),
            question_kind: QuestionKind::Plausibility,
            choices: choices.iter().map(|c| c.to_string()).collect(),
            gold: 0,
        }
    }

    #[test]
    fn extract_rain_flood_example() {
        let concepts = extract_concepts("After heavy rain, the streets were flooded.");
        assert_eq!(names(&concepts), ["heavy", "rain", "street", "flood"]);
        assert_eq!(concepts[1].source_span, Some((12, 16)));
        assert!(extract_concepts("").is_empty());
        assert!(extract_concepts("The the the").is_empty());
    }

    #[test]
    fn concept_lemmas_have_no_whitespace() {
        let c = Concept::new("Cause  Flooding").unwrap();
        assert_eq!(c.lemma, "cause_flooding");
        assert_eq!(c.surface(), "cause flooding");
        assert!(Concept::new("   ").is_none());
    }

    #[test]
    fn query_limit_and_order() {
        let store = rain_store();
        let rain = Concept::new("rain").unwrap();
        let top = query_edges(&rain, &store, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].relation, Relation::CapableOf);
        assert_eq!(top[0].end.lemma, "cause_flooding");
        assert_eq!(query_edges(&rain, &store, 10).unwrap().len(), 2);
        assert!(query_edges(&rain, &store, 0).unwrap().is_empty());
        let unknown = Concept::new("zzzqq").unwrap();
        assert!(query_edges(&unknown, &store, 5).unwrap().is_empty());
    }

    #[test]
    fn query_ties_break_lexicographically() {
        let store = SnapshotStore::from_edges(vec![
            KnowledgeEdge::new("fire", Relation::RelatedTo, "smoke", 1.0),
            KnowledgeEdge::new("fire", Relation::Causes, "smoke", 1.0),
            KnowledgeEdge::new("fire", Relation::Causes, "heat", 1.0),
        ]);
        let edges = query_edges(&Concept::new("fire").unwrap(), &store, 3).unwrap();
        let keys: Vec<_> = edges
            .iter()
            .map(|e| (e.relation, e.end.lemma.as_str()))
            .collect();
        assert_eq!(
            keys,
            [
                (Relation::Causes, "heat"),
                (Relation::Causes, "smoke"),
                (Relation::RelatedTo, "smoke")
            ]
        );
    }

    #[test]
    fn snapshot_skips_foreign_relations_and_rejects_bad_weights() {
        let store = SnapshotStore::parse("a\tIsA\tb\t1.0\na\tCauses\tc\t0.5\tA causes c\n").unwrap();
        assert_eq!(store.len(), 1);
        let e = &store.edges_for("c").unwrap()[0];
        assert_eq!(e.surface.as_deref(), Some("A causes c"));
        assert!(matches!(
            SnapshotStore::parse("a\tCauses\tb\t-1\n"),
            Err(KnowledgeError::Snapshot { line: 1, .. })
        ));
        assert!(matches!(
            SnapshotStore::parse("\n\na\tCauses\n"),
            Err(KnowledgeError::Snapshot { line: 3, .. })
        ));
    }

    #[test]
    fn verbalize_templates() {
        let e = KnowledgeEdge::new("rain", Relation::CapableOf, "cause_flooding", 2.0);
        assert_eq!(verbalize(&e), "Rain is capable of cause flooding.");
        let e = KnowledgeEdge::new("x", Relation::RelatedTo, "x", 1.0);
        assert_eq!(verbalize(&e), "X is related to x.");
        let e = KnowledgeEdge::new("fire", Relation::Causes, "smoke", 1.0);
        assert_eq!(verbalize(&e), "Fire causes smoke.");
        let e = KnowledgeEdge::new("sleep", Relation::HasPrerequisite, "bed", 1.0);
        assert_eq!(verbalize(&e), "Sleep requires bed.");
    }

    #[test]
    fn build_context_prefers_strong_edges() {
        let store = rain_store();
        let it = item("After heavy rain, the streets were flooded.", &["a b", "c d"]);
        let bundle = build_context(
            &it,
            &store,
            ContextLimits {
                k_per_concept: 2,
                max_statements: 3,
            },
        )
        .unwrap();
        assert_eq!(
            bundle.statements,
            ["Rain is capable of cause flooding.", "Rain is related to water."]
        );
        assert_eq!(bundle.provenance.len(), 2);
        assert!(bundle.counterfactuals.is_empty());

        let one = build_context(
            &it,
            &store,
            ContextLimits {
                k_per_concept: 2,
                max_statements: 1,
            },
        )
        .unwrap();
        assert_eq!(one.statements, ["Rain is capable of cause flooding."]);
    }

    #[test]
    fn weak_edges_only_fill_remaining_slots() {
        let store = SnapshotStore::from_edges(vec![
            KnowledgeEdge::new("sun", Relation::RelatedTo, "light", 9.0),
            KnowledgeEdge::new("sun", Relation::Causes, "shadow", 1.0),
        ]);
        let it = item("The sun rose.", &["x y", "z w"]);
        let one = build_context(
            &it,
            &store,
            ContextLimits {
                k_per_concept: 5,
                max_statements: 1,
            },
        )
        .unwrap();
        assert_eq!(one.statements, ["Sun causes shadow."]);
        let two = build_context(
            &it,
            &store,
            ContextLimits {
                k_per_concept: 5,
                max_statements: 2,
            },
        )
        .unwrap();
        // emitted in weight order once selected
        assert_eq!(two.statements, ["Sun is related to light.", "Sun causes shadow."]);
    }

    #[test]
    fn missing_concepts_give_empty_bundle() {
        let it = item("Zzzqq blorp.", &["qwv", "xkcd"]);
        let bundle = build_context(&it, &rain_store(), ContextLimits::default()).unwrap();
        assert!(bundle.is_empty());
        assert!(bundle.provenance.is_empty());
    }

    #[test]
    fn conceptnet_json_parsing() {
        let body = serde_json::json!({
            "edges": [
                {"start": {"term": "/c/en/rain"}, "rel": {"label": "CapableOf"},
                 "end": {"term": "/c/en/cause_flooding"}, "weight": 2.0,
                 "surfaceText": "[[rain]] can [[cause flooding]]"},
                {"start": {"term": "/c/en/rain/n"}, "rel": {"label": "IsA"},
                 "end": {"term": "/c/en/weather"}, "weight": 3.0},
                {"start": {"term": "/c/fr/pluie"}, "rel": {"label": "RelatedTo"},
                 "end": {"term": "/c/en/rain"}, "weight": 1.0},
                {"start": {"@id": "/c/en/rain/n/wn"}, "rel": {"@id": "/r/Causes"},
                 "end": {"@id": "/c/en/wet"}, "weight": 1.5}
            ]
        });
        let edges = parse_conceptnet_response(&body).unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].end.lemma, "cause_flooding");
        assert_eq!(edges[1].start.lemma, "rain");
        assert_eq!(edges[1].relation, Relation::Causes);
        assert!(parse_conceptnet_response(&serde_json::json!({})).is_err());
    }
}
