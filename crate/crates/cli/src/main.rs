mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use care_ca::causalnet::{self, CausalNetEntry, FilterPolicy, DEFAULT_MIN_CONTEXT_WORDS};
use care_ca::corpus::{load_dataset, split, DatasetDescriptor};
use care_ca::counterfactual::{CounterfactualRewriter, TemplateRegistry};
use care_ca::evaluation::{
    evaluate, evaluate_ablation, parse_report_csv, render_report, write_report_files, EvalReport,
    Pipeline, ReportFormat,
};
use care_ca::exec::ExecMode;
use care_ca::knowledge::{CachedStore, ConceptNetClient, KnowledgeStore, SnapshotStore};
use care_ca::prompting::{AblationFlags, LabelStyle};
use care_ca::provider::{build_provider, ChatRewriter, HttpChat, ProviderKind};
use clap::{Args, Parser, Subcommand};

use config::AppConfig;

#[derive(Debug, Parser)]
#[command(name = "care-ca", version, about = "Knowledge- and counterfactual-augmented causal reasoning")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set eval.runs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a provider on a dataset's test split and write report files.
    Eval(EvalArgs),
    /// Show the knowledge, counterfactuals and prompt for one item.
    Inspect(InspectArgs),
    /// CausalNet corpus tooling.
    #[command(subcommand)]
    Causalnet(CausalNetCommand),
    /// Report utilities.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_path: Option<PathBuf>,
    /// all, no-cre, no-cki or none.
    #[arg(long)]
    flags: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    /// mock or http.
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Evaluate all four flag settings instead of the configured one.
    #[arg(long)]
    ablation: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Mode {
    Sequential,
    Parallel,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    id: String,
    /// hypothesis or letter.
    #[arg(long)]
    label_style: Option<LabelStyle>,
}

#[derive(Debug, Subcommand)]
enum CausalNetCommand {
    /// Check every line against the entry schema.
    Validate { file: PathBuf },
    /// Drop short and duplicate entries; kept entries go to stdout or --out.
    Filter {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_CONTEXT_WORDS)]
        min_words: usize,
        #[arg(long)]
        keep_duplicates: bool,
        /// Require both a cause-effect and a counterfactual question.
        #[arg(long)]
        require_both: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Stats { file: PathBuf },
    /// Print the scenario-generation prompt.
    EmitPrompt,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Re-render a report CSV.
    Render {
        csv: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

impl DataArgs {
    fn apply(&self, cfg: &mut AppConfig) {
        if let Some(d) = &self.dataset {
            cfg.eval.dataset = Some(d.clone());
        }
        if let Some(p) = &self.data_path {
            cfg.eval.data_path = Some(p.clone());
        }
        if let Some(f) = &self.flags {
            cfg.pipeline.flags = f.clone();
        }
    }
}

impl EvalArgs {
    fn apply(&self, cfg: &mut AppConfig) {
        self.data.apply(cfg);
        if let Some(r) = self.split_ratio {
            cfg.eval.split_ratio = r;
        }
        if let Some(s) = self.seed {
            cfg.eval.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.eval.runs = r as usize;
        }
        if let Some(p) = self.provider {
            cfg.provider.kind = p;
        }
        if let Some(o) = &self.outdir {
            cfg.eval.outdir = o.clone();
        }
        if let Some(m) = self.mode {
            cfg.eval.mode = match m {
                Mode::Sequential => ExecMode::Sequential,
                Mode::Parallel => ExecMode::Parallel,
            };
        }
    }
}

/// Knowledge store named by the config, if any.
fn open_store(cfg: &AppConfig) -> Result<Option<Box<dyn KnowledgeStore>>> {
    let k = &cfg.knowledge;
    if let Some(path) = &k.snapshot_path {
        let store = SnapshotStore::open(path)
            .with_context(|| format!("opening knowledge snapshot {}", path.display()))?;
        return Ok(Some(Box::new(store)));
    }
    if let Some(endpoint) = &k.endpoint {
        let client = ConceptNetClient::new(endpoint.as_str(), Duration::from_millis(k.timeout_ms), k.fetch_limit);
        let cached = CachedStore::new(client, &k.cache_dir)
            .with_context(|| format!("creating cache dir {}", k.cache_dir.display()))?;
        return Ok(Some(Box::new(cached)));
    }
    Ok(None)
}

fn load_templates(cfg: &AppConfig) -> Result<TemplateRegistry> {
    match &cfg.cre.templates_path {
        Some(p) => TemplateRegistry::load(p).with_context(|| format!("loading templates {}", p.display())),
        None => Ok(TemplateRegistry::default()),
    }
}

fn open_rewriter(cfg: &AppConfig) -> Result<Option<Box<dyn CounterfactualRewriter>>> {
    if !cfg.cre.rewrite {
        return Ok(None);
    }
    if cfg.provider.kind != ProviderKind::HttpChat {
        bail!("cre.rewrite needs provider.kind = \"http_chat\"");
    }
    Ok(Some(Box::new(ChatRewriter::new(HttpChat::new(&cfg.provider)?))))
}

/// Writes to stdout; a reader that hung up early (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_eval(cfg: &AppConfig, ablation: bool) -> Result<()> {
    let name = cfg.dataset()?;
    let desc = DatasetDescriptor::new(name, cfg.data_path(name));
    let store = open_store(cfg)?;
    let templates = load_templates(cfg)?;
    let rewriter = open_rewriter(cfg)?;
    let provider = build_provider(&cfg.provider)?;
    let pipeline = Pipeline {
        store: store.as_deref(),
        templates: &templates,
        rewriter: rewriter.as_deref(),
        config: cfg.pipeline_config()?,
    };
    let opts = cfg.eval_options();

    let report: EvalReport = if ablation {
        let items = load_dataset(&desc)?;
        let test = split(&items, opts.split_ratio, opts.seed)?.test;
        evaluate_ablation(name, &test, provider.as_ref(), &pipeline, &AblationFlags::grid(), &opts)?
    } else {
        evaluate(&desc, provider.as_ref(), &pipeline, &opts)?.report
    };
    write_report_files(&report, &cfg.eval.outdir)?;
    emit(&render_report(&report, ReportFormat::Table))?;
    eprintln!("reports written to {}", cfg.eval.outdir.display());
    Ok(())
}

fn cmd_inspect(cfg: &AppConfig, id: &str) -> Result<()> {
    let name = cfg.dataset()?;
    let path = cfg.data_path(name);
    let items = load_dataset(&DatasetDescriptor::new(name, &path))?;
    let item = items
        .iter()
        .find(|i| i.id == id)
        .with_context(|| format!("no item with id `{id}` in {}", path.display()))?;
    let store = open_store(cfg)?;
    let templates = load_templates(cfg)?;
    let pipeline = Pipeline {
        store: store.as_deref(),
        templates: &templates,
        rewriter: None,
        config: cfg.pipeline_config()?,
    };
    pipeline.check()?;
    let flags = pipeline.config.flags;
    let prepared = pipeline.prepare(item);

    let mut out = String::new();
    writeln!(out, "item: {} ({})", item.id, name.display_name())?;
    writeln!(out, "flags: {}", flags.tag())?;
    if let Some(e) = &prepared.knowledge_error {
        writeln!(out, "knowledge lookup failed: {e}")?;
    }
    if flags.use_cki {
        writeln!(out, "\n[knowledge]")?;
        for s in &prepared.bundle.statements {
            writeln!(out, "- {s}")?;
        }
    }
    if flags.use_cre {
        writeln!(out, "\n[counterfactuals]")?;
        for s in &prepared.bundle.counterfactuals {
            writeln!(out, "- {s}")?;
        }
    }
    let pkg = match &prepared.prompt {
        Ok(pkg) => pkg,
        Err(e) => bail!("prompt assembly failed: {e}"),
    };
    writeln!(out, "\n[prompt, ~{} tokens]", pkg.token_estimate)?;
    writeln!(out, "{}\n\n{}", pkg.system_text, pkg.user_text)?;
    emit(&out)
}

fn read_entries(file: &Path) -> Result<Vec<CausalNetEntry>> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    for (line, result) in causalnet::validate_lines(&text) {
        match result {
            Ok(e) => entries.push(e),
            Err(violations) => problems.extend(violations.into_iter().map(|v| format!("line {line}: {v}"))),
        }
    }
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("{p}");
        }
        bail!("{}: {} schema violation(s)", file.display(), problems.len());
    }
    Ok(entries)
}

fn cmd_causalnet(cmd: CausalNetCommand) -> Result<()> {
    match cmd {
        CausalNetCommand::Validate { file } => {
            let entries = read_entries(&file)?;
            emit(&format!("{}: {} entries valid\n", file.display(), entries.len()))?;
        }
        CausalNetCommand::Filter {
            file,
            min_words,
            keep_duplicates,
            require_both,
            out,
        } => {
            let entries = read_entries(&file)?;
            let policy = FilterPolicy {
                drop_duplicates: !keep_duplicates,
                min_context_words: min_words,
                require_both_kinds: require_both,
            };
            let (kept, rejected) = causalnet::filter_corpus(&entries, &policy);
            for r in &rejected {
                eprintln!("rejected {}: {}", r.entry.id, r.reason);
            }
            eprintln!("kept {} of {} entries", kept.len(), entries.len());
            let body: String = kept.iter().map(|e| e.to_json() + "\n").collect();
            match out {
                Some(path) => std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?,
                None => emit(&body)?,
            }
        }
        CausalNetCommand::Stats { file } => {
            let s = causalnet::stats(&read_entries(&file)?);
            emit(&format!(
                "entries: {}\nquestions: {}\ncause-effect questions: {}\ncounterfactual questions: {}\n\
                 mean choices per question: {:.2}\nduplicate contexts: {}\n",
                s.entry_count,
                s.question_count,
                s.cause_effect_questions,
                s.counterfactual_questions,
                s.mean_choices_per_question,
                s.duplicate_contexts
            ))?;
        }
        CausalNetCommand::EmitPrompt => emit(&format!("{}\n", causalnet::emit_generation_prompt()))?,
    }
    Ok(())
}

fn cmd_report(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Render { csv, format } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let report = parse_report_csv(&text).with_context(|| format!("parsing {}", csv.display()))?;
            emit(&render_report(&report, format))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match &cli.command {
        Some(Command::Eval(args)) => args.apply(&mut cfg),
        Some(Command::Inspect(args)) => {
            args.data.apply(&mut cfg);
            if let Some(style) = args.label_style {
                cfg.prompt.label_style = style;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if cli.print_config {
        return emit(&cfg.to_toml());
    }
    match cli.command {
        Some(Command::Eval(args)) => cmd_eval(&cfg, args.ablation),
        Some(Command::Inspect(args)) => cmd_inspect(&cfg, &args.id),
        Some(Command::Causalnet(cmd)) => cmd_causalnet(cmd),
        Some(Command::Report(cmd)) => cmd_report(cmd),
        None => bail!("no command given (try --help)"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
