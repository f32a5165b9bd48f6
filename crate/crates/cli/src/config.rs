//! TOML configuration: file, then `--set` overrides, then command flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use care_ca::evaluation::{EvalOptions, PipelineConfig};
use care_ca::exec::ExecMode;
use care_ca::knowledge::ContextLimits;
use care_ca::prompting::{AblationFlags, LabelStyle, PromptStyle, DEFAULT_BUDGET, DEFAULT_SYSTEM_TEXT};
use care_ca::provider::ProviderConfig;
use care_ca::DatasetName;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub knowledge: KnowledgeSection,
    pub provider: ProviderConfig,
    pub prompt: PromptSection,
    pub pipeline: PipelineSection,
    pub cre: CreSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    pub endpoint: Option<String>,
    pub snapshot_path: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub timeout_ms: u64,
    pub fetch_limit: usize,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        Self {
            endpoint: None,
            snapshot_path: None,
            cache_dir: PathBuf::from(".care-ca-cache"),
            timeout_ms: 10_000,
            fetch_limit: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub budget: usize,
    pub label_style: LabelStyle,
    pub system_text: String,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            label_style: LabelStyle::Hypothesis,
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub k_per_concept: usize,
    pub max_statements: usize,
    pub cf_max: usize,
    /// One of `all`, `no-cre`, `no-cki`, `none`.
    pub flags: String,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let limits = ContextLimits::default();
        Self {
            k_per_concept: limits.k_per_concept,
            max_statements: limits.max_statements,
            cf_max: PipelineConfig::default().cf_max,
            flags: AblationFlags::ALL_ON.tag().to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreSection {
    pub templates_path: Option<PathBuf>,
    /// Polish template output through the configured chat provider.
    pub rewrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub dataset: Option<String>,
    /// Overrides the file name derived from `dataset` under `data_dir`.
    pub data_path: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub runs: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub outdir: PathBuf,
    pub mode: ExecMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        let opts = EvalOptions::default();
        Self {
            dataset: None,
            data_path: None,
            data_dir: PathBuf::from("data"),
            runs: opts.runs,
            seed: opts.seed,
            split_ratio: opts.split_ratio,
            outdir: PathBuf::from("out"),
            mode: opts.mode,
        }
    }
}

/// Parses `key=value`. The value is read as a TOML literal when it is one
/// (`3`, `true`, `"x"`) and as a bare string otherwise.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .with_context(|| format!("--set expects key=value, got `{raw}`"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        bail!("--set: malformed key `{key}`");
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for (depth, key) in parents.iter().enumerate() {
        let entry = cur
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .with_context(|| format!("--set: `{}` is not a section", parents[..=depth].join(".")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl AppConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            apply_override(&mut table, &path, value)?;
        }
        toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn flags(&self) -> Result<AblationFlags> {
        self.pipeline
            .flags
            .parse()
            .map_err(|e: String| anyhow::anyhow!("pipeline.flags: {e}"))
    }

    pub fn dataset(&self) -> Result<DatasetName> {
        let name = self
            .eval
            .dataset
            .as_deref()
            .context("no dataset given (use --dataset or set eval.dataset)")?;
        Ok(name.parse()?)
    }

    pub fn data_path(&self, name: DatasetName) -> PathBuf {
        self.eval
            .data_path
            .clone()
            .unwrap_or_else(|| care_ca::corpus::dataset_path_hint(name, &self.eval.data_dir))
    }

    /// Checks cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        self.flags()?;
        if self.eval.runs == 0 {
            bail!("eval.runs must be at least 1");
        }
        if !(self.eval.split_ratio > 0.0 && self.eval.split_ratio < 1.0) {
            bail!("eval.split_ratio must lie strictly between 0 and 1");
        }
        if self.prompt.budget == 0 {
            bail!("prompt.budget must be positive");
        }
        if self.knowledge.endpoint.is_some() && self.knowledge.snapshot_path.is_some() {
            bail!("set only one of knowledge.endpoint and knowledge.snapshot_path");
        }
        self.provider.validate()?;
        Ok(())
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            limits: ContextLimits {
                k_per_concept: self.pipeline.k_per_concept,
                max_statements: self.pipeline.max_statements,
            },
            cf_max: self.pipeline.cf_max,
            budget: self.prompt.budget,
            style: PromptStyle {
                label_style: self.prompt.label_style,
                system_text: self.prompt.system_text.clone(),
            },
            flags: self.flags()?,
        })
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            runs: self.eval.runs,
            seed: self.eval.seed,
            split_ratio: self.eval.split_ratio,
            max_concurrency: self.provider.max_concurrency,
            mode: self.eval.mode,
            outdir: Some(self.eval.outdir.clone()),
        }
    }
}
