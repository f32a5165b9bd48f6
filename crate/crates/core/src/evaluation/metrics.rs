use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CausalItem, DatasetName};
use crate::prompting::AblationFlags;
use crate::provider::Prediction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("run/item mismatch: {0}")]
    Integrity(String),
    #[error("cannot aggregate zero runs")]
    EmptyAggregate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub gold: usize,
    pub parsed: Prediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: DatasetName,
    pub provider_id: String,
    pub flags: AblationFlags,
    pub per_item: Vec<ItemOutcome>,
    pub run_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold counts per choice index.
    pub support: Vec<usize>,
}

impl MetricBlock {
    pub fn new(accuracy: f64, precision: f64, recall: f64, support: Vec<usize>) -> Self {
        Self {
            accuracy,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            support,
        }
    }
}

pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision and recall for `class`. Abstentions are never
/// counted as predicted positives.
fn class_pr(outcomes: &[&ItemOutcome], class: usize) -> (f64, f64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for o in outcomes {
        let predicted = o.parsed == Prediction::Choice(class);
        match (predicted, o.gold == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Scores one run against its items.
///
/// Accuracy counts abstentions as wrong. When every item has two choices,
/// precision and recall treat choice 0 as the positive class; otherwise they
/// are macro-averaged one-vs-rest over every class seen in gold labels or
/// predictions. F1 is the harmonic mean of the resulting precision and
/// recall.
pub fn score_run(run: &RunResult, items: &[CausalItem]) -> Result<MetricBlock, MetricsError> {
    let by_id: HashMap<&str, &CausalItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    if by_id.len() != items.len() {
        return Err(MetricsError::Integrity("duplicate item ids".into()));
    }
    if run.per_item.len() != items.len() {
        return Err(MetricsError::Integrity(format!(
            "{} outcomes for {} items",
            run.per_item.len(),
            items.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut outcomes = Vec::with_capacity(run.per_item.len());
    for o in &run.per_item {
        let item = by_id
            .get(o.id.as_str())
            .ok_or_else(|| MetricsError::Integrity(format!("unknown item `{}`", o.id)))?;
        if !seen.insert(o.id.as_str()) {
            return Err(MetricsError::Integrity(format!("item `{}` scored twice", o.id)));
        }
        if item.gold != o.gold {
            return Err(MetricsError::Integrity(format!("gold mismatch for `{}`", o.id)));
        }
        if let Prediction::Choice(p) = o.parsed {
            if p >= item.choices.len() {
                return Err(MetricsError::Integrity(format!(
                    "prediction {p} out of range for `{}`",
                    o.id
                )));
            }
        }
        outcomes.push(o);
    }

    let n_classes = items.iter().map(|i| i.choices.len()).max().unwrap_or(0);
    let mut support = vec![0; n_classes];
    for o in &outcomes {
        support[o.gold] += 1;
    }
    let correct = outcomes
        .iter()
        .filter(|o| o.parsed == Prediction::Choice(o.gold))
        .count();
    let accuracy = ratio(correct, outcomes.len());

    let (precision, recall) = if n_classes <= 2 {
        class_pr(&outcomes, 0)
    } else {
        let classes: BTreeSet<usize> = outcomes
            .iter()
            .flat_map(|o| std::iter::once(o.gold).chain(o.parsed.index()))
            .collect();
        let (p_sum, r_sum) = classes
            .iter()
            .map(|&c| class_pr(&outcomes, c))
            .fold((0.0, 0.0), |(ps, rs), (p, r)| (ps + p, rs + r));
        let k = classes.len().max(1) as f64;
        (p_sum / k, r_sum / k)
    };
    Ok(MetricBlock::new(accuracy, precision, recall, support))
}

/// Fieldwise arithmetic mean; support is taken from the first block.
pub fn aggregate(runs: &[MetricBlock]) -> Result<MetricBlock, MetricsError> {
    let first = runs.first().ok_or(MetricsError::EmptyAggregate)?;
    let n = runs.len() as f64;
    let mean = |f: fn(&MetricBlock) -> f64| runs.iter().map(f).sum::<f64>() / n;
    Ok(MetricBlock {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        support: first.support.clone(),
    })
}
