//! The crawl loop: train, select under the domain cap, fetch, observe the
//! reward, extend the frontier, and record the transition.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::KeywordSet;
use crate::error::{Error, Result};
use crate::fetch::{domain_of, normalize_url, Page, PageSource};
use crate::frontier::{FlatFrontier, FrontierEntry, SelectMode, Selection, TreeFrontier};
use crate::graph::{CrawlGraph, FeatureExtractor, OutlinkCandidate, StateActionVector};
use crate::qlearn::{AgentConfig, DdqnAgent, ReplayRecord};
use crate::reward::{PageText, RelevanceEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Tres,
    TreeRandom,
    Random,
    SynchronousTres,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Tres => "tres",
            Policy::TreeRandom => "tree_random",
            Policy::Random => "random",
            Policy::SynchronousTres => "synchronous_tres",
        }
    }

    fn uses_q(self) -> bool {
        matches!(self, Policy::Tres | Policy::SynchronousTres)
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "tres" => Ok(Policy::Tres),
            "tree_random" => Ok(Policy::TreeRandom),
            "random" => Ok(Policy::Random),
            "synchronous_tres" | "sync" => Ok(Policy::SynchronousTres),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrawlConfig {
    pub seeds: Vec<String>,
    /// Number of fetches after the seeds.
    pub budget: u64,
    /// Per-domain fetch cap; `None` is unlimited.
    pub max_domain: Option<u32>,
    pub policy: Policy,
    pub hub_features: bool,
    pub rng_seed: u64,
    /// Steps of pure exploration before greedy selection can happen.
    pub warmup: u64,
    /// Drop all drawn representatives instead of only the selected one.
    pub literal_removal: bool,
    /// Largest budget accepted for the synchronous baseline.
    pub synchronous_budget_ceiling: u64,
    pub agent: AgentConfig,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            seeds: Vec::new(),
            budget: 1000,
            max_domain: None,
            policy: Policy::Tres,
            hub_features: true,
            rng_seed: 0,
            warmup: 50,
            literal_removal: false,
            synchronous_budget_ceiling: 5000,
            agent: AgentConfig::default(),
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.max_domain == Some(0) {
            return Err(Error::Config("max_domain must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed URL is required".into()));
        }
        if self.policy == Policy::SynchronousTres && self.budget > self.synchronous_budget_ceiling {
            return Err(Error::Config(format!(
                "synchronous_tres is limited to {} steps, got budget {}",
                self.synchronous_budget_ceiling, self.budget
            )));
        }
        self.agent.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// True iff another fetch from the URL's domain stays within the cap.
pub fn enforce_max_domain(graph: &CrawlGraph, url: &str, max: Option<u32>) -> Result<bool> {
    match max {
        None => Ok(true),
        Some(m) => Ok(graph.domain_stats(&domain_of(url)?).fetched < m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrawlStatus {
    Completed,
    Exhausted,
}

/// One line of the crawl log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub timestep: u64,
    pub url: String,
    pub parent: String,
    pub reward: u8,
    pub domain: String,
    pub features: StateActionVector,
    pub q_value: Option<f64>,
    pub mode: SelectMode,
    /// "ok" or the fetch failure category.
    pub fetch_status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub timestep: u64,
    /// Frontier entries whose URL is not yet fetched, at selection time.
    pub frontier_size: usize,
    pub leaf_count: usize,
    pub q_evals: usize,
    pub split_occurred: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlResult {
    pub status: CrawlStatus,
    pub policy: Policy,
    pub seeds: Vec<String>,
    pub fetched: Vec<FetchRecord>,
    pub steps: Vec<StepStats>,
    pub losses: Vec<LossRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fetched: usize,
    pub relevant: usize,
    pub harvest_rate: f64,
    pub relevant_domains: usize,
    pub unique_domains: usize,
}

/// Harvest rate and domain counts over the fetched sequence (seeds excluded).
pub fn metrics(fetched: &[FetchRecord]) -> Metrics {
    if fetched.is_empty() {
        log::warn!("metrics requested for an empty crawl");
        return Metrics {
            fetched: 0,
            relevant: 0,
            harvest_rate: 0.0,
            relevant_domains: 0,
            unique_domains: 0,
        };
    }
    let mut domains: BTreeMap<&str, bool> = BTreeMap::new();
    let mut relevant = 0;
    for r in fetched {
        relevant += usize::from(r.reward);
        *domains.entry(&r.domain).or_default() |= r.reward == 1;
    }
    Metrics {
        fetched: fetched.len(),
        relevant,
        harvest_rate: relevant as f64 / fetched.len() as f64,
        relevant_domains: domains.values().filter(|&&v| v).count(),
        unique_domains: domains.len(),
    }
}

impl CrawlResult {
    pub fn metrics(&self) -> Metrics {
        metrics(&self.fetched)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.fetched {
            serde_json::to_writer(&mut w, r).map_err(|e| Error::json("crawl log", e))?;
            w.write_all(b"\n").map_err(|e| Error::io("<crawl log>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }
}

/// Reads a crawl log written by [`CrawlResult::write_jsonl`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<FetchRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

/// Independent, reproducible seed for a named purpose.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.gen()
}

const STREAM_SELECT: u64 = 1;
const STREAM_AGENT: u64 = 2;

enum Store {
    Tree(TreeFrontier),
    Flat(FlatFrontier),
}

/// Counts of stored frontier entries per unfetched URL.
#[derive(Default)]
struct Pending {
    by_url: HashMap<String, u32>,
    total: usize,
}

impl Pending {
    fn add(&mut self, url: &str) {
        *self.by_url.entry(url.to_string()).or_default() += 1;
        self.total += 1;
    }

    fn remove_one(&mut self, url: &str) {
        if let Some(c) = self.by_url.get_mut(url) {
            *c -= 1;
            self.total -= 1;
            if *c == 0 {
                self.by_url.remove(url);
            }
        }
    }

    fn fetched(&mut self, url: &str) {
        if let Some(c) = self.by_url.remove(url) {
            self.total -= c as usize;
        }
    }
}

/// Inputs shared by every crawl: keywords, the estimator used for the
/// title-relevance feature, and the estimator that decides rewards.
pub struct CrawlContext<'a> {
    pub keywords: &'a KeywordSet,
    pub features: &'a dyn RelevanceEstimator,
    pub reward: &'a dyn RelevanceEstimator,
}

/// Runs one crawl of `cfg.budget` fetches.
pub fn crawl(cfg: &CrawlConfig, ctx: &CrawlContext<'_>, source: &mut dyn PageSource) -> Result<CrawlResult> {
    cfg.validate()?;
    let extractor = FeatureExtractor {
        hub_features: cfg.hub_features,
        max_len: ctx.features.max_len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, STREAM_SELECT));
    let mut agent = DdqnAgent::new(extractor.dimension(), cfg.agent.clone(), derive_seed(cfg.rng_seed, STREAM_AGENT))?;
    let mut graph = CrawlGraph::new();
    let mut store = match cfg.policy {
        Policy::Random => Store::Flat(FlatFrontier::new()),
        _ => Store::Tree(TreeFrontier::new().with_literal_removal(cfg.literal_removal)),
    };
    let mut pending = Pending::default();

    // Seeds: fetched up front, rewarded 1, and used to initialise the replay.
    let mut seeds = Vec::new();
    for raw in &cfg.seeds {
        let url = normalize_url(raw)?;
        if graph.contains(&url) {
            continue;
        }
        let seed_cand = OutlinkCandidate {
            url: url.clone(),
            anchor: String::new(),
            title: None,
        };
        let x = extractor.seed_vector(&graph, &seed_cand, ctx.features, ctx.keywords)?;
        let page = match source.fetch(&url) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("seed fetch failed: {e}");
                None
            }
        };
        graph.register_seed(&url)?;
        agent.replay.seed(&[x]);
        if let Store::Tree(t) = &mut store {
            t.insert_experience(x, 1);
        }
        if let Some(page) = page {
            let (entries, _) = expand(&page, &url, &graph, &extractor, ctx, &mut pending, 0)?;
            push_entries(&mut store, entries);
        }
        seeds.push(url);
    }

    let mut fetched = Vec::new();
    let mut steps = Vec::new();
    let mut losses = Vec::new();
    let mut status = CrawlStatus::Completed;

    for t in 0..cfg.budget {
        let epsilon = cfg.agent.epsilon(t, cfg.budget);
        if cfg.policy.uses_q() {
            if let Some(loss) = agent.train_minibatch()? {
                losses.push(LossRecord { step: t, loss, epsilon });
            }
        }
        let mode = match cfg.policy {
            Policy::Tres | Policy::SynchronousTres => {
                if t < cfg.warmup || rng.gen_bool(epsilon) {
                    SelectMode::Explore
                } else {
                    SelectMode::Greedy
                }
            }
            Policy::TreeRandom | Policy::Random => SelectMode::Explore,
        };

        let frontier_size = pending.total;
        let leaf_count = match &store {
            Store::Tree(tr) => tr.leaf_count(),
            Store::Flat(_) => 1,
        };
        let max = cfg.max_domain;
        let selection = {
            let pending = &mut pending;
            let graph = &graph;
            let valid = |e: &FrontierEntry| {
                if graph.contains(&e.url) {
                    return false;
                }
                if max.is_some() {
                    let ok = enforce_max_domain(graph, &e.url, max).unwrap_or(false);
                    if !ok {
                        pending.remove_one(&e.url);
                    }
                    return ok;
                }
                true
            };
            match &mut store {
                Store::Tree(tr) => match cfg.policy {
                    Policy::SynchronousTres => tr.select_synchronous(mode, &agent.online, &mut rng, valid),
                    _ => tr.select(mode, &agent.online, &mut rng, valid),
                },
                Store::Flat(f) => f.select(&mut rng, valid).map(|entry| Selection {
                    entry,
                    leaf: 0,
                    q_value: None,
                    q_evals: 0,
                    representatives: 1,
                    frontier_size,
                }),
            }
        };
        let sel = match selection {
            Ok(s) => s,
            Err(Error::FrontierExhausted) => {
                log::info!("frontier exhausted after {t} fetches");
                status = CrawlStatus::Exhausted;
                break;
            }
            Err(e) => return Err(e),
        };
        let url = sel.entry.url.clone();
        let parent = sel.entry.parent.clone();
        pending.remove_one(&url);
        pending.fetched(&url);

        let (page, fetch_status) = match source.fetch(&url) {
            Ok(p) => (Some(p), "ok".to_string()),
            Err(e) => {
                log::debug!("fetch failed: {e}");
                (None, e.category().to_string())
            }
        };
        let reward = match &page {
            Some(p) => {
                let text = PageText::from_page(&url, &p.title, &p.body_text, ctx.reward.max_len());
                ctx.reward.reward(&text, ctx.keywords)
            }
            None => 0,
        };
        let node_domain = graph.register_fetch(Some(&parent), &url, reward)?.domain.clone();

        let mut next_actions = Vec::new();
        if let Some(page) = &page {
            let (entries, xs) = expand(page, &url, &graph, &extractor, ctx, &mut pending, t + 1)?;
            push_entries(&mut store, entries);
            next_actions = xs;
        }
        let cap = cfg.agent.max_next_actions;
        if next_actions.len() > cap {
            let mut keep = sample(&mut rng, next_actions.len(), cap).into_vec();
            keep.sort_unstable();
            next_actions = keep.into_iter().map(|i| next_actions[i]).collect();
        }
        let split = match &mut store {
            Store::Tree(tr) => tr.insert_experience(sel.entry.x, reward).is_some(),
            Store::Flat(_) => false,
        };
        if cfg.policy.uses_q() {
            agent.replay.push(ReplayRecord {
                x: sel.entry.x,
                reward,
                next_actions,
            });
        }

        steps.push(StepStats {
            timestep: t + 1,
            frontier_size,
            leaf_count,
            q_evals: sel.q_evals,
            split_occurred: split,
        });
        fetched.push(FetchRecord {
            timestep: t + 1,
            url,
            parent,
            reward,
            domain: node_domain,
            features: sel.entry.x,
            q_value: sel.q_value,
            mode,
            fetch_status,
        });
    }

    Ok(CrawlResult {
        status,
        policy: cfg.policy,
        seeds,
        fetched,
        steps,
        losses,
    })
}

fn push_entries(store: &mut Store, entries: Vec<FrontierEntry>) {
    match store {
        Store::Tree(t) => t.extend_frontier(entries),
        Store::Flat(f) => f.extend(entries),
    }
}

/// Frontier entries for the unfetched outlinks of `page`, and their vectors.
fn expand(
    page: &Page,
    parent: &str,
    graph: &CrawlGraph,
    extractor: &FeatureExtractor,
    ctx: &CrawlContext<'_>,
    pending: &mut Pending,
    timestep: u64,
) -> Result<(Vec<FrontierEntry>, Vec<StateActionVector>)> {
    let mut entries = Vec::with_capacity(page.outlinks.len());
    let mut xs = Vec::with_capacity(page.outlinks.len());
    for link in &page.outlinks {
        let Ok(url) = normalize_url(&link.url) else { continue };
        if graph.contains(&url) {
            continue;
        }
        let cand = OutlinkCandidate {
            url,
            anchor: link.anchor.clone(),
            title: None,
        };
        let x = extractor.build_state_action(graph, parent, &cand, ctx.features, ctx.keywords)?;
        pending.add(&cand.url);
        xs.push(x);
        entries.push(FrontierEntry::new(x, cand.url, parent, cand.anchor, timestep));
    }
    Ok((entries, xs))
}
