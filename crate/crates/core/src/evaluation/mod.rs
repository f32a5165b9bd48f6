//! End-to-end evaluation: knowledge, counterfactuals, prompt, provider and
//! scoring for every test item, repeated over several runs.

pub mod metrics;
pub mod report;
pub mod transcript;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CausalItem, CorpusError, DatasetDescriptor, DatasetName};
use crate::counterfactual::{
    attach, generate_counterfactuals, rewrite_all, CounterfactualRewriter, TemplateRegistry,
};
use crate::exec::{map_items, ExecMode};
use crate::knowledge::{build_context, ContextBundle, ContextLimits, KnowledgeStore};
use crate::prompting::{render_ablation, AblationFlags, PromptPackage, PromptStyle, DEFAULT_BUDGET};
use crate::provider::{complete, Prediction, Provider};
use crate::util::sha256_hex;

pub use metrics::{aggregate, score_run, ItemOutcome, MetricBlock, MetricsError, RunResult};
pub use report::{parse_report_csv, render_report, EvalReport, ReportFormat, ReportRow};
use transcript::{load_completed, transcript_path, TranscriptRecord, TranscriptWriter};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("knowledge store not configured (required when CKI or CRE is enabled)")]
    MissingKnowledgeStore,
    #[error("runs must be at least 1")]
    ZeroRuns,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub limits: ContextLimits,
    pub cf_max: usize,
    pub budget: usize,
    pub style: PromptStyle,
    pub flags: AblationFlags,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            limits: ContextLimits::default(),
            cf_max: 2,
            budget: DEFAULT_BUDGET,
            style: PromptStyle::default(),
            flags: AblationFlags::ALL_ON,
        }
    }
}

/// Shared, read-only pipeline resources.
pub struct Pipeline<'a> {
    pub store: Option<&'a dyn KnowledgeStore>,
    pub templates: &'a TemplateRegistry,
    pub rewriter: Option<&'a dyn CounterfactualRewriter>,
    pub config: PipelineConfig,
}

/// Everything the pipeline produced for one item, before any provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedItem {
    pub bundle: ContextBundle,
    pub prompt: Result<PromptPackage, String>,
    /// Non-fatal knowledge failure; the item fell back to an empty bundle.
    pub knowledge_error: Option<String>,
}

impl PreparedItem {
    pub fn prompt_hash(&self) -> Option<String> {
        self.prompt.as_ref().ok().map(|p| sha256_hex(&p.full_text()))
    }
}

impl Pipeline<'_> {
    pub fn check(&self) -> Result<(), EvalError> {
        if self.config.flags.needs_knowledge() && self.store.is_none() {
            return Err(EvalError::MissingKnowledgeStore);
        }
        Ok(())
    }

    /// Knowledge bundle with counterfactuals attached, honoring the flags.
    pub fn bundle(&self, item: &CausalItem) -> (ContextBundle, Option<String>) {
        let flags = self.config.flags;
        let Some(store) = self.store.filter(|_| flags.needs_knowledge()) else {
            return (ContextBundle::default(), None);
        };
        let (bundle, error) = match build_context(item, store, self.config.limits) {
            Ok(b) => (b, None),
            Err(e) => (ContextBundle::default(), Some(e.to_string())),
        };
        if !flags.use_cre {
            return (bundle, error);
        }
        let mut cfs = generate_counterfactuals(item, &bundle, self.templates, self.config.cf_max);
        if let Some(rewriter) = self.rewriter {
            cfs = rewrite_all(item, cfs, rewriter);
        }
        (attach(&bundle, &cfs), error)
    }

    pub fn prepare(&self, item: &CausalItem) -> PreparedItem {
        let (bundle, knowledge_error) = self.bundle(item);
        let prompt = render_ablation(
            item,
            &bundle,
            self.config.flags,
            self.config.budget,
            &self.config.style,
        )
        .map_err(|e| e.to_string());
        PreparedItem {
            bundle,
            prompt,
            knowledge_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub runs: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub max_concurrency: usize,
    pub mode: ExecMode,
    /// Where transcripts and report files go; `None` keeps everything in
    /// memory and disables resumption.
    pub outdir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            runs: 3,
            seed: 7,
            split_ratio: 0.75,
            max_concurrency: 4,
            mode: ExecMode::Parallel,
            outdir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub runs: Vec<RunResult>,
    pub run_metrics: Vec<MetricBlock>,
}

/// Report label for a model under the given flags.
pub fn model_label(provider_id: &str, flags: AblationFlags) -> String {
    match (flags.use_cki, flags.use_cre) {
        (true, true) => format!("CARE-CA ({provider_id})"),
        (true, false) => format!("CARE-CA -CRE ({provider_id})"),
        (false, true) => format!("CARE-CA -CKI ({provider_id})"),
        (false, false) => provider_id.to_string(),
    }
}

/// Loads and splits the dataset, then scores the test side.
pub fn evaluate(
    desc: &DatasetDescriptor,
    provider: &dyn Provider,
    pipeline: &Pipeline<'_>,
    opts: &EvalOptions,
) -> Result<Evaluation, EvalError> {
    let items = corpus::load_dataset(desc)?;
    let split = corpus::split(&items, opts.split_ratio, opts.seed)?;
    evaluate_items(desc.name, &split.test, provider, pipeline, opts)
}

/// Runs the pipeline over `items` for `opts.runs` runs and aggregates.
///
/// Item-level work runs concurrently; outcomes keep item order. With an
/// output directory, every provider call is appended to `run<k>.log` and
/// calls already recorded there for the same prompt are not repeated.
pub fn evaluate_items(
    dataset: DatasetName,
    items: &[CausalItem],
    provider: &dyn Provider,
    pipeline: &Pipeline<'_>,
    opts: &EvalOptions,
) -> Result<Evaluation, EvalError> {
    if opts.runs == 0 {
        return Err(EvalError::ZeroRuns);
    }
    pipeline.check()?;
    if let Some(dir) = &opts.outdir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }

    let threads = opts.max_concurrency.max(1);
    let prepared = map_items(items, opts.mode, threads, |item| pipeline.prepare(item));
    let flags = pipeline.config.flags;
    let tag = flags.tag().to_string();
    let mut error_count = 0;
    let mut runs = Vec::with_capacity(opts.runs);
    let mut run_metrics = Vec::with_capacity(opts.runs);

    for run_index in 1..=opts.runs {
        let (completed, writer) = match &opts.outdir {
            Some(dir) => {
                let path = transcript_path(dir, run_index);
                let done = load_completed(&path).map_err(io_err(&path))?;
                let writer = TranscriptWriter::open(&path).map_err(io_err(&path))?;
                (done, Some((writer, path)))
            }
            None => Default::default(),
        };
        let work: Vec<(&CausalItem, &PreparedItem)> = items.iter().zip(&prepared).collect();
        let results = map_items(&work, opts.mode, threads, |(item, prep)| {
            let hash = prep.prompt_hash().unwrap_or_default();
            let key = (tag.clone(), item.id.clone(), hash.clone());
            if let Some(rec) = completed.get(&key) {
                return Ok::<_, EvalError>((rec.parsed, false));
            }
            let (parsed, raw_text, latency_ms, error) = match &prep.prompt {
                Err(e) => (Prediction::Abstain, String::new(), 0, Some(e.clone())),
                Ok(pkg) => match complete(pkg, provider) {
                    Ok(ans) => (ans.parsed, ans.raw_text, ans.latency_ms, None),
                    Err(e) => (Prediction::Abstain, String::new(), 0, Some(e.to_string())),
                },
            };
            let failed = error.is_some();
            if let Some((writer, path)) = &writer {
                let rec = TranscriptRecord {
                    item_id: item.id.clone(),
                    flags: tag.clone(),
                    prompt_hash: hash,
                    raw_text,
                    parsed,
                    latency_ms,
                    error,
                };
                writer.append(&rec).map_err(io_err(path))?;
            }
            Ok((parsed, failed))
        });

        let mut per_item = Vec::with_capacity(items.len());
        for (item, result) in items.iter().zip(results) {
            let (parsed, failed) = result?;
            error_count += usize::from(failed);
            per_item.push(ItemOutcome {
                id: item.id.clone(),
                gold: item.gold,
                parsed,
            });
        }
        let run = RunResult {
            dataset,
            provider_id: provider.id().to_string(),
            flags,
            per_item,
            run_index,
        };
        run_metrics.push(score_run(&run, items)?);
        runs.push(run);
    }
    error_count += prepared.iter().filter(|p| p.knowledge_error.is_some()).count();

    let row = ReportRow {
        experiment: dataset.task().experiment_name().to_string(),
        dataset: dataset.display_name().to_string(),
        model: model_label(provider.id(), flags),
        metrics: aggregate(&run_metrics)?,
    };
    Ok(Evaluation {
        report: EvalReport {
            rows: vec![row],
            run_count: opts.runs,
            error_count,
        },
        runs,
        run_metrics,
    })
}

/// Single-variable test: one report row per flag setting in `grid`.
pub fn evaluate_ablation(
    dataset: DatasetName,
    items: &[CausalItem],
    provider: &dyn Provider,
    pipeline: &Pipeline<'_>,
    grid: &[AblationFlags],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport::default();
    for &flags in grid {
        let variant = Pipeline {
            store: pipeline.store,
            templates: pipeline.templates,
            rewriter: pipeline.rewriter,
            config: PipelineConfig {
                flags,
                ..pipeline.config.clone()
            },
        };
        report.merge(evaluate_items(dataset, items, provider, &variant, opts)?.report);
    }
    Ok(report)
}

/// Writes `report.txt` and `report.csv` into `outdir`.
pub fn write_report_files(report: &EvalReport, outdir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(outdir).map_err(io_err(outdir))?;
    for (name, format) in [("report.txt", ReportFormat::Table), ("report.csv", ReportFormat::Csv)] {
        let path = outdir.join(name);
        std::fs::write(&path, render_report(report, format)).map_err(io_err(&path))?;
    }
    Ok(())
}
