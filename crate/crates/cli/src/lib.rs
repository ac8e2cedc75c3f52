//! `wranglemine`: mine, describe, generate for and score wrangling datasets.

pub mod config;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::{json, Value};

use wrangle_core::aligner::{validate, Split, WranglingExample};
use wrangle_core::corpus::fetch_remote;
use wrangle_core::lifecycle::ApiCatalog;
use wrangle_core::llmgen::{build_prompt, postprocess, CompletionClient, LlmError, PromptSpec, ShotPool};
use wrangle_core::metrics::{aggregate, execution_accuracy, score_surface, MetricReport, Prediction, ReplaySource};
use wrangle_core::parallel::{map_ordered, with_jobs};
use wrangle_core::pipeline::{self, MineOptions, REPLAY_INDEX_FILE};
use wrangle_core::replay::{CachedReplayer, ReplayCache, Replayer, SandboxPool, DEFAULT_TIMEOUT_S};
use wrangle_core::stats::{dataset_stats, render_table};

pub use config::FileConfig;
pub use manifest::{file_digest, tree_digest, RunManifest, MANIFEST_FILE};

pub const SANDBOX_ENV: &str = "WRANGLE_SANDBOX_CMD";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Parser)]
#[command(name = "wranglemine", version, about = "Mine and evaluate data-wrangling examples from notebooks")]
pub struct Cli {
    /// TOML file with default values for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine a local notebook corpus into a dataset
    Mine(MineArgs),
    /// Per-split dataset statistics
    Stats(StatsArgs),
    /// Check every example against the dataset invariants
    Validate(ValidateArgs),
    /// Few-shot predictions from a completion endpoint
    Generate(GenerateArgs),
    /// Score predictions with EM, CodeBLEU and (optionally) EA
    Evaluate(EvaluateArgs),
    /// Run gold targets through execution accuracy
    ReplayCheck(ReplayCheckArgs),
    /// Download a repository snapshot into a corpus directory
    Fetch(FetchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExecArgs {
    /// Never start a sandbox; only cached replay responses are used
    #[arg(long)]
    pub no_exec: bool,
    /// Command that starts one sandbox worker
    #[arg(long)]
    pub sandbox_cmd: Option<String>,
    /// JSON Lines replay cache, read first and updated after live runs
    #[arg(long)]
    pub replay_cache: Option<PathBuf>,
    #[arg(long)]
    pub timeout_s: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// API catalog JSON; the built-in catalog otherwise
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Print JSON instead of the table
    #[arg(long)]
    pub json: bool,
    /// Directory for stats.json and the run manifest
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub max_rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// train, dev, test or all
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub max_frame_rows: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write prompts.jsonl and stop before calling the endpoint
    #[arg(long)]
    pub prompts_only: bool,
    /// Minimum milliseconds between requests
    #[arg(long)]
    pub min_interval_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Replay index written by `mine`; next to the dataset by default
    #[arg(long)]
    pub replay_index: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct ReplayCheckArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub replay_index: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// owner/name or a git URL
    pub repo: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a command ended when it did not error out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 2,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Mine(a) => cmd_mine(a, &cfg),
        Command::Stats(a) => cmd_stats(a),
        Command::Validate(a) => cmd_validate(a, &cfg),
        Command::Generate(a) => cmd_generate(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
        Command::ReplayCheck(a) => cmd_replay_check(a, &cfg),
        Command::Fetch(a) => cmd_fetch(a, &cfg),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Flag, then config file, then environment for the sandbox command.
#[derive(Debug, Clone, serde::Serialize)]
struct ExecSettings {
    no_exec: bool,
    sandbox_cmd: Option<String>,
    replay_cache: Option<PathBuf>,
    timeout_s: u64,
    jobs: usize,
}

impl ExecSettings {
    fn resolve(a: &ExecArgs, cfg: &FileConfig) -> Self {
        ExecSettings {
            no_exec: a.no_exec || cfg.no_exec.unwrap_or(false),
            sandbox_cmd: a
                .sandbox_cmd
                .clone()
                .or_else(|| cfg.sandbox_cmd.clone())
                .or_else(|| std::env::var(SANDBOX_ENV).ok().filter(|s| !s.trim().is_empty())),
            replay_cache: a.replay_cache.clone().or_else(|| cfg.replay_cache.clone()),
            timeout_s: a.timeout_s.or(cfg.timeout_s).unwrap_or(DEFAULT_TIMEOUT_S),
            jobs: a.jobs.or(cfg.jobs).unwrap_or_else(default_jobs).max(1),
        }
    }

    /// Cache plus live sandbox as configured; `None` when neither exists.
    fn replayer(&self) -> Result<Option<CachedReplayer>> {
        let live: Option<Box<dyn Replayer>> = match (&self.sandbox_cmd, self.no_exec) {
            (Some(cmd), false) => Some(Box::new(SandboxPool::new(cmd, self.jobs).context("starting sandbox")?)),
            _ => None,
        };
        let cache = match &self.replay_cache {
            Some(p) => ReplayCache::load(p).with_context(|| format!("loading replay cache {}", p.display()))?,
            None if live.is_none() => return Ok(None),
            None => ReplayCache::default(),
        };
        let write_back = if live.is_some() { self.replay_cache.clone() } else { None };
        Ok(Some(CachedReplayer::new(cache, live, write_back)))
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.with_context(|| format!("--{flag} is required (flag or config)"))
}

fn parse_split(s: Option<&str>, default: &str) -> Result<Option<Split>> {
    match s.unwrap_or(default) {
        "all" => Ok(None),
        "train" => Ok(Some(Split::Train)),
        "dev" => Ok(Some(Split::Dev)),
        "test" => Ok(Some(Split::Test)),
        other => bail!("unknown split {other:?} (train, dev, test or all)"),
    }
}

fn load_dataset(path: &Path) -> Result<Vec<WranglingExample>> {
    pipeline::read_jsonl(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn select(examples: Vec<WranglingExample>, split: Option<Split>) -> Vec<WranglingExample> {
    examples.into_iter().filter(|e| split.is_none_or(|s| e.split == s)).collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_mine(a: MineArgs, cfg: &FileConfig) -> Result<Outcome> {
    let started = Instant::now();
    let corpus = required(a.corpus.or_else(|| cfg.corpus.clone()), "corpus")?;
    let out = required(a.out.or_else(|| cfg.out.clone()), "out")?;
    let catalog_path = a.catalog.or_else(|| cfg.catalog.clone());
    let exec = ExecSettings::resolve(&a.exec, cfg);
    let opts = MineOptions { max_rows: a.max_rows.or(cfg.max_rows).unwrap_or(10), timeout_s: exec.timeout_s };
    if !corpus.is_dir() {
        bail!("corpus {} is not a directory", corpus.display());
    }
    let catalog = match &catalog_path {
        Some(p) => ApiCatalog::load(p).with_context(|| format!("loading catalog {}", p.display()))?,
        None => ApiCatalog::default(),
    };
    let Some(replayer) = exec.replayer()? else {
        bail!("mining needs replay: give --sandbox-cmd (or {SANDBOX_ENV}), or --no-exec with --replay-cache");
    };
    create_dir(&out)?;
    let result = with_jobs(exec.jobs, || pipeline::mine(&corpus, &out, &catalog, &replayer, &opts));
    pipeline::write_outputs(&out, &result).context("writing dataset")?;
    replayer.flush().context("writing replay cache")?;
    info!("{} examples, {} failures", result.examples.len(), result.failures);

    let settings = json!({
        "catalog": catalog_path,
        "max_rows": opts.max_rows,
        "exec": exec,
    });
    let mut counts = serde_json::to_value(&result.counts)?;
    counts["examples"] = json!(result.examples.len());
    counts["failures"] = json!(result.failures);
    RunManifest::new("mine", &settings, tree_digest(&corpus)?, counts, started).write(&out)?;
    Ok(Outcome::from_failures(result.failures))
}

pub fn cmd_stats(a: StatsArgs) -> Result<Outcome> {
    let started = Instant::now();
    let examples = load_dataset(&a.dataset)?;
    let stats = dataset_stats(&examples);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", render_table(&stats));
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join(STATS_FILE), &stats)?;
        let counts = json!({ "examples": examples.len() });
        RunManifest::new("stats", &json!({}), file_digest(&a.dataset)?, counts, started).write(out)?;
    }
    Ok(Outcome::Success)
}

pub fn cmd_validate(a: ValidateArgs, cfg: &FileConfig) -> Result<Outcome> {
    let examples = load_dataset(&a.dataset)?;
    let violations = validate(&examples, a.max_rows.or(cfg.max_rows).unwrap_or(10));
    for v in &violations {
        println!("{}\t{}\t{}", v.id, v.rule, v.detail);
    }
    println!("{} examples, {} violations", examples.len(), violations.len());
    Ok(Outcome::from_failures(violations.len()))
}

fn prompt_spec(a: &GenerateArgs, cfg: &FileConfig) -> PromptSpec {
    let d = PromptSpec::default();
    PromptSpec {
        instruction: cfg.instruction.clone().unwrap_or(d.instruction),
        k: a.k.or(cfg.k).unwrap_or(d.k),
        max_frame_rows: a.max_frame_rows.or(cfg.max_frame_rows).unwrap_or(d.max_frame_rows),
        max_generation_tokens: a.max_tokens.or(cfg.max_tokens).unwrap_or(d.max_generation_tokens),
        model: a.model.clone().or_else(|| cfg.model.clone()).unwrap_or(d.model),
        temperature: a.temperature.or(cfg.temperature).unwrap_or(d.temperature),
        seed: a.seed.or(cfg.seed).unwrap_or(d.seed),
    }
}

pub fn cmd_generate(a: GenerateArgs, cfg: &FileConfig) -> Result<Outcome> {
    let started = Instant::now();
    let spec = prompt_spec(&a, cfg);
    let out = required(a.out.clone().or_else(|| cfg.out.clone()), "out")?;
    let split = parse_split(a.split.as_deref().or(cfg.split.as_deref()), "test")?;
    let jobs = a.jobs.or(cfg.jobs).unwrap_or_else(default_jobs).max(1);
    let all = load_dataset(&a.dataset)?;
    let pool = ShotPool::new(&all);
    if spec.k > 0 && pool.is_empty() {
        warn!("no train examples; prompts will be zero-shot");
    }
    let targets: Vec<&WranglingExample> = all.iter().filter(|e| split.is_none_or(|s| e.split == s)).collect();
    let prompts: Vec<(String, String)> =
        targets.iter().map(|e| (e.id.clone(), build_prompt(e, &pool.draw(spec.seed, &e.id, spec.k), &spec))).collect();
    create_dir(&out)?;
    let settings = json!({ "spec": spec, "split": a.split.as_deref().or(cfg.split.as_deref()).unwrap_or("test") });
    let digest = file_digest(&a.dataset)?;
    let prompt_rows: Vec<Value> = prompts.iter().map(|(id, p)| json!({ "id": id, "prompt": p })).collect();
    pipeline::write_jsonl(&out.join(PROMPTS_FILE), &prompt_rows)?;
    if a.prompts_only {
        let counts = json!({ "examples": prompts.len(), "requested": 0 });
        RunManifest::new("generate", &settings, digest, counts, started).write(&out)?;
        return Ok(Outcome::Success);
    }

    let mut client = CompletionClient::from_env().context("completion endpoint")?;
    if let Some(ms) = a.min_interval_ms {
        client = client.with_min_interval(Duration::from_millis(ms));
    }
    let results: Vec<Result<String, LlmError>> = with_jobs(jobs, || map_ordered(&prompts, |(id, p)| client.complete(id, p, &spec)));
    let mut preds = Vec::with_capacity(prompts.len());
    let mut failures = BTreeMap::<String, usize>::new();
    for ((id, prompt), r) in prompts.iter().zip(results) {
        let prediction = match r {
            Ok(text) => postprocess(&text, Some(prompt)).unwrap_or_else(|_| {
                *failures.entry("empty_generation".into()).or_default() += 1;
                String::new()
            }),
            Err(e @ (LlmError::AuthError(_) | LlmError::MissingConfig(_))) => return Err(e).context("completion endpoint"),
            Err(e) => {
                warn!("{id}: {e}");
                let kind = match e {
                    LlmError::RateLimited(_) => "rate_limited",
                    _ => "transport_error",
                };
                *failures.entry(kind.into()).or_default() += 1;
                String::new()
            }
        };
        preds.push(Prediction { id: id.clone(), prediction });
    }
    pipeline::write_jsonl(&out.join(PREDICTIONS_FILE), &preds)?;
    let lost: usize = failures.values().sum();
    let counts = json!({ "examples": prompts.len(), "failed": failures });
    RunManifest::new("generate", &settings, digest, counts, started).write(&out)?;
    Ok(Outcome::from_failures(lost))
}

fn load_sources(dataset: &Path, index: Option<PathBuf>) -> Result<BTreeMap<String, ReplaySource>> {
    let base = dataset.parent().unwrap_or(Path::new("."));
    let path = index.unwrap_or_else(|| base.join(REPLAY_INDEX_FILE));
    let rows: Vec<ReplaySource> = pipeline::read_jsonl(&path).with_context(|| format!("reading replay index {}", path.display()))?;
    Ok(rows
        .into_iter()
        .map(|mut s| {
            if s.data_dir.is_relative() {
                s.data_dir = base.join(&s.data_dir);
            }
            (s.id.clone(), s)
        })
        .collect())
}

/// Shared body of `evaluate` and `replay-check`.
fn score(
    examples: &[WranglingExample],
    preds: &BTreeMap<String, String>,
    exec: &ExecSettings,
    sources: impl FnOnce() -> Result<BTreeMap<String, ReplaySource>>,
    require_exec: bool,
    metadata: BTreeMap<String, Value>,
) -> Result<(MetricReport, usize)> {
    let mut rows = with_jobs(exec.jobs, || score_surface(examples, preds));
    let mut unavailable = 0;
    let replayer = if exec.no_exec && !require_exec { None } else { exec.replayer()? };
    match replayer {
        Some(r) => {
            let sources = sources()?;
            unavailable = with_jobs(exec.jobs, || execution_accuracy(&mut rows, examples, preds, &sources, &r, exec.timeout_s));
            r.flush().context("writing replay cache")?;
        }
        None if require_exec => bail!("execution needs --sandbox-cmd (or {SANDBOX_ENV}) or a --replay-cache"),
        None if !exec.no_exec => warn!("no sandbox configured; EA omitted"),
        None => {}
    }
    Ok((aggregate(rows, metadata), unavailable))
}

pub fn cmd_evaluate(a: EvaluateArgs, cfg: &FileConfig) -> Result<Outcome> {
    let started = Instant::now();
    let exec = ExecSettings::resolve(&a.exec, cfg);
    let split_name = a.split.clone().or_else(|| cfg.split.clone()).unwrap_or_else(|| "test".into());
    let examples = select(load_dataset(&a.dataset)?, parse_split(Some(&split_name), "test")?);
    let pred_rows: Vec<Prediction> =
        pipeline::read_jsonl(&a.predictions).with_context(|| format!("reading predictions {}", a.predictions.display()))?;
    let mut preds = BTreeMap::new();
    for p in pred_rows {
        if preds.insert(p.id.clone(), p.prediction).is_some() {
            bail!("duplicate prediction for {}", p.id);
        }
    }
    let known: std::collections::BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let stray = preds.keys().filter(|k| !known.contains(k.as_str())).count();
    if stray > 0 {
        warn!("{stray} predictions have no example in split {split_name}");
    }
    let dataset_digest = file_digest(&a.dataset)?;
    let predictions_digest = file_digest(&a.predictions)?;
    let metadata = BTreeMap::from([
        ("dataset_digest".to_owned(), json!(dataset_digest)),
        ("predictions_digest".to_owned(), json!(predictions_digest)),
        ("split".to_owned(), json!(split_name)),
        ("stray_predictions".to_owned(), json!(stray)),
    ]);
    let index = a.replay_index.clone();
    let (report, unavailable) = score(&examples, &preds, &exec, || load_sources(&a.dataset, index), false, metadata)?;
    print!("{}", report.table());
    if let Some(out) = a.out.or_else(|| cfg.out.clone()) {
        create_dir(&out)?;
        write_json(&out.join(REPORT_FILE), &report)?;
        let counts = json!({ "examples": examples.len(), "ea_unavailable": unavailable });
        let settings = json!({ "split": split_name, "exec": exec });
        RunManifest::new("evaluate", &settings, format!("{dataset_digest}+{predictions_digest}"), counts, started).write(&out)?;
    }
    Ok(Outcome::from_failures(unavailable))
}

pub fn cmd_replay_check(a: ReplayCheckArgs, cfg: &FileConfig) -> Result<Outcome> {
    let started = Instant::now();
    let exec = ExecSettings::resolve(&a.exec, cfg);
    let split_name = a.split.clone().or_else(|| cfg.split.clone()).unwrap_or_else(|| "all".into());
    let examples = select(load_dataset(&a.dataset)?, parse_split(Some(&split_name), "all")?);
    let preds: BTreeMap<String, String> = examples.iter().map(|e| (e.id.clone(), e.target_code.clone())).collect();
    let digest = file_digest(&a.dataset)?;
    let metadata = BTreeMap::from([
        ("dataset_digest".to_owned(), json!(digest)),
        ("split".to_owned(), json!(split_name)),
        ("candidates".to_owned(), json!("gold")),
    ]);
    let index = a.replay_index.clone();
    let (report, unavailable) = score(&examples, &preds, &exec, || load_sources(&a.dataset, index), true, metadata)?;
    print!("{}", report.table());
    let unsound: Vec<&str> = report.per_example.iter().filter(|r| r.ea == Some(0)).map(|r| r.id.as_str()).collect();
    for id in &unsound {
        println!("gold fails: {id}");
    }
    if let Some(out) = a.out.or_else(|| cfg.out.clone()) {
        create_dir(&out)?;
        write_json(&out.join(REPORT_FILE), &report)?;
        let counts = json!({ "examples": examples.len(), "gold_failures": unsound.len(), "ea_unavailable": unavailable });
        RunManifest::new("replay-check", &json!({ "split": split_name, "exec": exec }), digest, counts, started).write(&out)?;
    }
    Ok(Outcome::from_failures(unavailable + unsound.len()))
}

pub fn cmd_fetch(a: FetchArgs, cfg: &FileConfig) -> Result<Outcome> {
    let out = a.out.or_else(|| cfg.corpus.clone()).context("--out is required (flag or corpus in config)")?;
    create_dir(&out)?;
    let dest = fetch_remote(&a.repo, &out).with_context(|| format!("fetching {}", a.repo))?;
    println!("{}", dest.display());
    Ok(Outcome::Success)
}
