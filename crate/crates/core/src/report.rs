//! Run manifests, per-run output directories and plot-ready CSV series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crawler::{crawl, read_log, CrawlConfig, CrawlContext, CrawlResult, LossRecord, Metrics, StepStats};
use crate::embeddings::{expand_keywords, EmbeddingTable, KeywordSet};
use crate::error::{Error, Result};
use crate::fetch::live::{LiveConfig, LiveFetcher};
use crate::reward::{read_corpus, LabeledPage, RelevanceModel};
use crate::text::default_stopwords;
use crate::scenario::{Scenario, ScenarioConfig};

/// Bumped whenever a CSV column set changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const LOG_FILE: &str = "crawl.jsonl";
pub const STEPS_FILE: &str = "steps.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_steps_csv(path: impl AsRef<Path>, steps: &[StepStats]) -> Result<()> {
    write_rows(path.as_ref(), steps)
}

pub fn read_steps_csv(path: impl AsRef<Path>) -> Result<Vec<StepStats>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

pub fn write_loss_csv(path: impl AsRef<Path>, losses: &[LossRecord]) -> Result<()> {
    write_rows(path.as_ref(), losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeavesRow {
    pub policy: String,
    pub timestep: u64,
    pub leaf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub policy: String,
    pub timestep: u64,
    pub frontier_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub policy: String,
    pub timestep: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestRow {
    pub policy: String,
    pub timestep: u64,
    pub harvest_rate: f64,
}

/// Plot series for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub leaves: Vec<LeavesRow>,
    pub frontier: Vec<FrontierRow>,
    pub ratio: Vec<RatioRow>,
    pub harvest: Vec<HarvestRow>,
}

impl Series {
    pub fn from_run(policy: &str, steps: &[StepStats], rewards: &[(u64, u8)]) -> Self {
        let mut s = Series::default();
        for st in steps {
            s.leaves.push(LeavesRow {
                policy: policy.to_string(),
                timestep: st.timestep,
                leaf_count: st.leaf_count,
            });
            s.frontier.push(FrontierRow {
                policy: policy.to_string(),
                timestep: st.timestep,
                frontier_size: st.frontier_size,
            });
            s.ratio.push(RatioRow {
                policy: policy.to_string(),
                timestep: st.timestep,
                ratio: st.frontier_size as f64 / st.leaf_count.max(1) as f64,
            });
        }
        let mut sum = 0u64;
        for (i, &(t, r)) in rewards.iter().enumerate() {
            sum += u64::from(r);
            s.harvest.push(HarvestRow {
                policy: policy.to_string(),
                timestep: t,
                harvest_rate: sum as f64 / (i + 1) as f64,
            });
        }
        s
    }

    pub fn extend(&mut self, other: Series) {
        self.leaves.extend(other.leaves);
        self.frontier.extend(other.frontier);
        self.ratio.extend(other.ratio);
        self.harvest.extend(other.harvest);
    }

    /// Writes `leaves.csv`, `frontier.csv`, `ratio.csv` and `harvest.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = ["leaves.csv", "frontier.csv", "ratio.csv", "harvest.csv"].map(|f| dir.join(f));
        write_rows(&paths[0], &self.leaves)?;
        write_rows(&paths[1], &self.frontier)?;
        write_rows(&paths[2], &self.ratio)?;
        write_rows(&paths[3], &self.harvest)?;
        Ok(paths.to_vec())
    }
}

/// Builds plot series from finished run directories.
pub fn report(run_dirs: &[PathBuf], out: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut all = Series::default();
    for dir in run_dirs {
        let manifest = RunManifest::load(dir.join(MANIFEST_FILE))?;
        let steps_path = dir.join(STEPS_FILE);
        if !steps_path.exists() {
            return Err(Error::Config(format!("missing stats file {}", steps_path.display())));
        }
        let steps = read_steps_csv(&steps_path)?;
        let log = read_log(dir.join(LOG_FILE))?;
        let rewards: Vec<(u64, u8)> = log.iter().map(|r| (r.timestep, r.reward)).collect();
        let label = format!("{}-{}", manifest.spec.crawl().policy.name(), manifest.run_id);
        all.extend(Series::from_run(&label, &steps, &rewards));
    }
    all.write(out)
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunSpec {
    Sim {
        scenario: ScenarioConfig,
        crawl: CrawlConfig,
    },
    Live {
        crawl: CrawlConfig,
        live: LiveConfig,
        /// Keyword file; treated as the initial set when `expand_with` is set.
        keywords: PathBuf,
        model: PathBuf,
        /// Embedding file and corpus used to expand the keywords before crawling.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expand_with: Option<(PathBuf, PathBuf)>,
    },
}

impl RunSpec {
    pub fn crawl(&self) -> &CrawlConfig {
        match self {
            RunSpec::Sim { crawl, .. } | RunSpec::Live { crawl, .. } => crawl,
        }
    }

    /// Short content hash naming the run directory.
    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run spec serializes");
        let hex = format!("{:x}", Sha256::digest(bytes));
        hex[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub spec: RunSpec,
    pub csv_schema_version: u32,
    pub artifacts: Vec<String>,
    pub wall_clock_secs: f64,
    pub versions: BTreeMap<String, String>,
    pub status: crate::crawler::CrawlStatus,
    pub metrics: Metrics,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([("treecrawl".to_string(), env!("CARGO_PKG_VERSION").to_string())])
}

/// Writes the log, step stats, loss curve, summary and manifest of a
/// finished crawl into `root/<run id>/` and returns that directory.
pub fn write_run(
    root: impl AsRef<Path>,
    command: &str,
    spec: RunSpec,
    result: &CrawlResult,
    started: Instant,
) -> Result<PathBuf> {
    let run_id = spec.run_id();
    let dir = root.as_ref().join(&run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let log_path = dir.join(LOG_FILE);
    fs::write(&log_path, result.to_jsonl()).map_err(|e| Error::io(&log_path, e))?;
    write_steps_csv(dir.join(STEPS_FILE), &result.steps)?;
    write_loss_csv(dir.join(LOSS_FILE), &result.losses)?;
    let metrics = result.metrics();
    let summary = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Error::json("summary", e))?;
    fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    let manifest = RunManifest {
        run_id,
        command: command.to_string(),
        spec,
        csv_schema_version: CSV_SCHEMA_VERSION,
        artifacts: [LOG_FILE, STEPS_FILE, LOSS_FILE, SUMMARY_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        versions: versions(),
        status: result.status,
        metrics,
    };
    manifest.save(dir.join(MANIFEST_FILE))?;
    Ok(dir)
}

/// Builds the scenario and runs the crawl described by a sim spec.
pub fn execute_sim(scenario: &ScenarioConfig, crawl: &CrawlConfig) -> Result<CrawlResult> {
    let sc = Scenario::build(scenario.clone())?;
    let mut cfg = crawl.clone();
    if cfg.seeds.is_empty() {
        cfg.seeds = sc.world.seed_urls();
    }
    sc.run(&cfg)
}

/// Runs a live crawl: loads the keywords and model, optionally expands the
/// keywords first, and fetches over HTTP.
pub fn execute_live(
    crawl_cfg: &CrawlConfig,
    live: &LiveConfig,
    keywords: &Path,
    model: &Path,
    expand_with: Option<&(PathBuf, PathBuf)>,
) -> Result<CrawlResult> {
    let mut ks = KeywordSet::load(keywords)?;
    if let Some((embeddings, corpus)) = expand_with {
        let table = EmbeddingTable::load(embeddings)?;
        let docs: Vec<Vec<String>> = read_corpus(corpus)?.iter().map(LabeledPage::tokens).collect();
        ks = expand_keywords(&ks, &docs, &table, default_stopwords())?.keywords;
    }
    let model = RelevanceModel::load(model)?;
    let ctx = CrawlContext {
        keywords: &ks,
        features: &model,
        reward: &model,
    };
    crawl(crawl_cfg, &ctx, &mut LiveFetcher::http(live.clone()))
}

/// Repeats a sim run from its manifest into `root`, returning the new run directory.
pub fn rerun(manifest_path: impl AsRef<Path>, root: impl AsRef<Path>) -> Result<PathBuf> {
    let manifest = RunManifest::load(manifest_path)?;
    let started = Instant::now();
    match &manifest.spec {
        RunSpec::Sim { scenario, crawl } => {
            let result = execute_sim(scenario, crawl)?;
            write_run(root, &manifest.command, manifest.spec.clone(), &result, started)
        }
        RunSpec::Live { .. } => Err(Error::Config(
            "live runs depend on the web and cannot be replayed from a manifest".into(),
        )),
    }
}

/// Hex SHA-256 of a file's contents.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: u64, f: usize, l: usize) -> StepStats {
        StepStats {
            timestep: t,
            frontier_size: f,
            leaf_count: l,
            q_evals: 0,
            split_occurred: false,
        }
    }

    #[test]
    fn ratio_and_harvest_series() {
        let s = Series::from_run("p", &[step(1, 10, 1), step(2, 18, 2)], &[(1, 1), (2, 0)]);
        assert_eq!(s.ratio[1].ratio, 9.0);
        assert_eq!(s.harvest[1].harvest_rate, 0.5);
    }

    #[test]
    fn steps_csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let steps = vec![step(1, 5, 1), step(2, 9, 2)];
        write_steps_csv(&path, &steps).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "timestep,frontier_size,leaf_count,q_evals,split_occurred"
        );
        assert_eq!(read_steps_csv(&path).unwrap(), steps);
    }
}
