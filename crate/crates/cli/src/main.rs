//! `treecrawl` command-line front end.
//!
//! Exit status: 0 when a crawl completes its budget, 3 when it stops early on
//! an empty frontier, 1 on any error, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::builder::BoolishValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use treecrawl_core::embeddings::{expand_keywords, EmbeddingTable, KeywordSet};
use treecrawl_core::error::Error;
use treecrawl_core::fetch::live::LiveConfig;
use treecrawl_core::report::{self, RunSpec, LOG_FILE, MANIFEST_FILE};
use treecrawl_core::reward::{read_corpus, train_on_corpus, write_corpus, LabeledPage, TrainConfig};
use treecrawl_core::scenario::{RewardSource, Scenario, ScenarioConfig};
use treecrawl_core::text::{default_stopwords, read_word_list, tokenize, StopWords};
use treecrawl_core::{CrawlConfig, CrawlResult, CrawlStatus, Policy};

const EXIT_FAILED: u8 = 1;
const EXIT_EXHAUSTED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "treecrawl", version, about = "Focused crawler with a decision-tree frontier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand an initial keyword set with corpus words close to it in embedding space.
    Expand(ExpandArgs),
    /// Train the relevance model on a labelled corpus.
    Train(TrainArgs),
    /// Generate a simulated world and write its inputs to a directory.
    Sim(SimArgs),
    /// Run a crawl and write its outputs to a per-run directory.
    Crawl(CrawlArgs),
    /// Build plot-ready CSV series from finished runs.
    Report(ReportArgs),
    /// Repeat a simulated run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct ExpandArgs {
    /// Initial keywords, one per line.
    #[arg(long)]
    keywords: PathBuf,
    /// Corpus: JSONL of labelled pages, or plain text with one document per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Stopword file; the built-in list is used when absent.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Output keyword file.
    #[arg(long)]
    out: PathBuf,
    /// JSON report with the threshold and every candidate score.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSONL of labelled pages.
    #[arg(long)]
    corpus: PathBuf,
    /// Keyword file, usually the output of `expand`.
    #[arg(long)]
    keywords: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Directory receiving world.jsonl, embeddings.txt, corpus.jsonl,
    /// keywords, seeds, model and scenario files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML; defaults are used when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    world_seed: Option<u64>,
    /// Reward signal in sim mode.
    #[arg(long, value_enum)]
    reward: Option<RewardArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RewardArg {
    Model,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Sim,
    Live,
}

#[derive(Debug, Args)]
struct CrawlArgs {
    #[arg(long, value_enum, default_value = "sim")]
    mode: Mode,
    /// Crawl config TOML; flags override its values.
    #[arg(long, env = "TREECRAWL_CONFIG")]
    config: Option<PathBuf>,
    /// Seed URLs, one per line. Sim mode defaults to the world's seeds.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Keyword file (live mode).
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Embedding file; with --corpus, the keywords are expanded first (live mode).
    #[arg(long, requires = "corpus")]
    embeddings: Option<PathBuf>,
    #[arg(long, requires = "embeddings")]
    corpus: Option<PathBuf>,
    /// Trained relevance model (live mode).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u64>,
    /// Per-domain fetch cap.
    #[arg(long)]
    max_domain: Option<u32>,
    /// tres, tree_random, random or synchronous_tres.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, value_parser = BoolishValueParser::new())]
    hub_features: Option<bool>,
    /// RNG seed of the crawl.
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    user_agent: Option<String>,
    /// Minimum delay between requests to one domain (live mode).
    #[arg(long)]
    delay_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories written by `crawl`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "reruns")]
    out: PathBuf,
}

type CliResult<T> = Result<T, Error>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Expand(a) => cmd_expand(a).map(|_| None),
        Command::Train(a) => cmd_train(a).map(|_| None),
        Command::Sim(a) => cmd_sim(a).map(|_| None),
        Command::Crawl(a) => cmd_crawl(a).map(Some),
        Command::Report(a) => cmd_report(a).map(|_| None),
        Command::Rerun(a) => cmd_rerun(a).map(Some),
    };
    match outcome {
        Ok(Some(CrawlStatus::Exhausted)) => ExitCode::from(EXIT_EXHAUSTED),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// JSONL corpora contribute title and text; any other file is one document per line.
fn read_documents(path: &Path) -> CliResult<Vec<Vec<String>>> {
    let is_jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    if is_jsonl {
        return Ok(read_corpus(path)?.iter().map(LabeledPage::tokens).collect());
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(tokenize).filter(|d| !d.is_empty()).collect())
}

fn cmd_expand(a: ExpandArgs) -> CliResult<()> {
    let ks = KeywordSet::new(read_word_list(&a.keywords)?)?;
    let table = EmbeddingTable::load(&a.embeddings)?;
    let docs = read_documents(&a.corpus)?;
    let custom;
    let stopwords: &StopWords = match &a.stopwords {
        Some(p) => {
            custom = StopWords::load(p)?;
            &custom
        }
        None => default_stopwords(),
    };
    match expand_keywords(&ks, &docs, &table, stopwords) {
        Ok(expansion) => {
            println!("threshold b = {:.6}", expansion.threshold);
            for s in expansion.admitted() {
                println!("  {} {:.6}", s.token, s.mean_cosine);
            }
            println!(
                "{} initial, {} discovered",
                expansion.keywords.initial().len(),
                expansion.keywords.discovered().len()
            );
            write_file(&a.out, expansion.keywords.to_file_text())?;
            if let Some(r) = &a.report {
                write_file(r, serde_json::to_string_pretty(&expansion).expect("expansion serializes"))?;
            }
        }
        Err(Error::EmptyCorpus) => {
            warn!("corpus {} has no words; keeping the initial keywords", a.corpus.display());
            write_file(&a.out, ks.to_file_text())?;
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let corpus = read_corpus(&a.corpus)?;
    let keywords = KeywordSet::load(&a.keywords)?;
    let mut cfg = TrainConfig::default();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let report = train_on_corpus(&corpus, &keywords, &cfg)?;
    if report.degenerate {
        warn!("training corpus has a single class; the model is a constant");
    }
    println!("holdout macro F1 = {:.4}", report.holdout_macro_f1);
    println!("threshold = {:.4}", report.model.threshold);
    report.model.save(&a.out)?;
    Ok(())
}

fn scenario_config(a: &ScenarioArgs) -> CliResult<ScenarioConfig> {
    let mut cfg = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = a.world_seed {
        cfg.world_seed = s;
    }
    if let Some(r) = a.reward {
        cfg.reward = match r {
            RewardArg::Model => RewardSource::Model,
            RewardArg::GroundTruth => RewardSource::GroundTruth,
        };
    }
    Ok(cfg)
}

fn cmd_sim(a: SimArgs) -> CliResult<()> {
    let cfg = scenario_config(&a.scenario)?;
    let sc = Scenario::build(cfg)?;
    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    sc.world.save(out.join("world.jsonl"))?;
    write_file(&out.join("embeddings.txt"), sc.embeddings.to_text())?;
    write_corpus(out.join("corpus.jsonl"), &sc.corpus)?;
    let initial = KeywordSet::new(sc.keywords().initial())?;
    write_file(&out.join("initial_keywords.txt"), initial.to_file_text())?;
    write_file(&out.join("keywords.txt"), sc.keywords().to_file_text())?;
    write_file(&out.join("seeds.txt"), sc.world.seed_urls().join("\n") + "\n")?;
    sc.model.save(out.join("model.json"))?;
    write_file(&out.join("scenario.toml"), sc.config.to_toml())?;
    println!(
        "world {} pages, {} relevant, hash {}",
        sc.world.pages.len(),
        sc.world.relevant_count(),
        sc.world.hash()
    );
    println!("model holdout macro F1 = {:.4}", sc.holdout_macro_f1);
    Ok(())
}

fn crawl_config(a: &CrawlArgs) -> CliResult<CrawlConfig> {
    let mut cfg = match &a.config {
        Some(p) => CrawlConfig::load(p)?,
        None => CrawlConfig::default(),
    };
    if let Some(p) = &a.seeds {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        cfg.seeds = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
    }
    if let Some(b) = a.budget {
        cfg.budget = b;
    }
    if a.max_domain.is_some() {
        cfg.max_domain = a.max_domain;
    }
    if let Some(p) = &a.policy {
        cfg.policy = p.parse::<Policy>()?;
    }
    if let Some(h) = a.hub_features {
        cfg.hub_features = h;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn print_result(dir: &Path, result: &CrawlResult) {
    let m = result.metrics();
    println!("run directory: {}", dir.display());
    println!(
        "{} fetched, harvest rate {:.4}, {} relevant of {} domains, status {:?}",
        m.fetched, m.harvest_rate, m.relevant_domains, m.unique_domains, result.status
    );
}

fn cmd_crawl(a: CrawlArgs) -> CliResult<CrawlStatus> {
    let started = Instant::now();
    let mut cfg = crawl_config(&a)?;
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let (spec, result) = match a.mode {
        Mode::Sim => {
            if a.keywords.is_some() || a.model.is_some() || a.embeddings.is_some() {
                return Err(Error::Config(
                    "sim mode derives keywords, embeddings and model from the scenario".into(),
                ));
            }
            let scenario = scenario_config(&a.scenario)?;
            let sc = Scenario::build(scenario.clone())?;
            if cfg.seeds.is_empty() {
                cfg.seeds = sc.world.seed_urls();
            }
            let result = sc.run(&cfg)?;
            (RunSpec::Sim { scenario, crawl: cfg }, result)
        }
        Mode::Live => {
            let need = |p: &Option<PathBuf>, flag: &str| {
                p.clone()
                    .ok_or_else(|| Error::Config(format!("live mode requires {flag}")))
            };
            let keywords = need(&a.keywords, "--keywords")?;
            let model = need(&a.model, "--model")?;
            let mut live = LiveConfig::default();
            if let Some(ua) = &a.user_agent {
                live.user_agent = ua.clone();
            }
            if let Some(d) = a.delay_ms {
                live.delay_ms = d;
            }
            let expand_with = a.embeddings.clone().zip(a.corpus.clone());
            let result = report::execute_live(&cfg, &live, &keywords, &model, expand_with.as_ref())?;
            let spec = RunSpec::Live {
                crawl: cfg,
                live,
                keywords,
                model,
                expand_with,
            };
            (spec, result)
        }
    };
    let dir = report::write_run(&a.out, &command, spec, &result, started)?;
    print_result(&dir, &result);
    Ok(result.status)
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    for path in report::report(&a.runs, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_rerun(a: RerunArgs) -> CliResult<CrawlStatus> {
    let dir = report::rerun(&a.manifest, &a.out)?;
    let manifest = report::RunManifest::load(dir.join(MANIFEST_FILE))?;
    println!("run directory: {}", dir.display());
    let original = a.manifest.parent().map(|p| p.join(LOG_FILE));
    if let Some(orig) = original.filter(|p| p.exists()) {
        let same = report::file_hash(&orig)? == report::file_hash(dir.join(LOG_FILE))?;
        if !same {
            return Err(Error::Config(format!(
                "rerun log differs from {}",
                orig.display()
            )));
        }
        println!("log identical to {}", orig.display());
    }
    Ok(manifest.status)
}
