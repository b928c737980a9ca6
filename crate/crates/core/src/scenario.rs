//! End-to-end simulated setup: a crawl world, a separately generated
//! training world, synthetic embeddings, keyword expansion and a trained
//! relevance model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crawler::{crawl, derive_seed, CrawlConfig, CrawlContext, CrawlResult, Policy};
use crate::embeddings::{expand_keywords, EmbeddingTable, Expansion, KeywordSet};
use crate::error::{Error, Result};
use crate::fetch::sim::{sim_embeddings, topic_token, SimParams, SimSource, SimWorld};
use crate::reward::{train_on_corpus, LabeledPage, PageText, RelevanceEstimator, RelevanceModel, TrainConfig};
use crate::text::default_stopwords;

/// Which signal decides rewards during a simulated crawl.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// The trained relevance model.
    #[default]
    Model,
    /// The world's own relevance labels.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub params: SimParams,
    pub world_seed: u64,
    pub embedding_dim: usize,
    /// Scatter of topic word vectors around their shared direction.
    pub embedding_spread: f64,
    /// Number of topic words given as initial keywords.
    pub initial_keywords: usize,
    /// Page count of the world the training corpus is drawn from.
    pub training_pages: usize,
    pub corpus_relevant: usize,
    pub corpus_irrelevant: usize,
    pub reward: RewardSource,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            params: SimParams::default(),
            world_seed: 7,
            embedding_dim: 16,
            embedding_spread: 0.6,
            initial_keywords: 3,
            training_pages: 4000,
            corpus_relevant: 200,
            corpus_irrelevant: 1800,
            reward: RewardSource::Model,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes to TOML")
    }
}

const STREAM_TRAIN_WORLD: u64 = 11;
const STREAM_EMBEDDINGS: u64 = 12;
const STREAM_CORPUS: u64 = 13;

/// Reward straight from the world's labels.
pub struct GroundTruth<'a>(pub &'a SimWorld);

impl RelevanceEstimator for GroundTruth<'_> {
    fn relevance_probability(&self, page: &PageText, _: &KeywordSet) -> f64 {
        match self.0.is_relevant(&page.url) {
            Some(true) => 1.0,
            _ => 0.0,
        }
    }

    fn threshold(&self) -> f64 {
        0.5
    }
}

pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: SimWorld,
    pub embeddings: EmbeddingTable,
    /// Labelled pages from the training world.
    pub corpus: Vec<LabeledPage>,
    pub expansion: Expansion,
    pub model: RelevanceModel,
    pub holdout_macro_f1: f64,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self> {
        let world = SimWorld::generate(&config.params, config.world_seed)?;
        let train_params = SimParams {
            pages: config.training_pages,
            seeds: 1,
            ..config.params.clone()
        };
        let train_world = SimWorld::generate(&train_params, derive_seed(config.world_seed, STREAM_TRAIN_WORLD))?;
        let embeddings = sim_embeddings(
            &config.params,
            config.embedding_dim,
            config.embedding_spread,
            derive_seed(config.world_seed, STREAM_EMBEDDINGS),
        )?;
        let initial = KeywordSet::new((0..config.initial_keywords).map(topic_token))?;
        let corpus = train_world.labeled_corpus(
            config.corpus_relevant,
            config.corpus_irrelevant,
            derive_seed(config.world_seed, STREAM_CORPUS),
        );
        let docs: Vec<Vec<String>> = corpus.iter().map(LabeledPage::tokens).collect();
        let expansion = expand_keywords(&initial, &docs, &embeddings, default_stopwords())?;
        let report = train_on_corpus(&corpus, &expansion.keywords, &TrainConfig::default())?;
        Ok(Self {
            config,
            world,
            embeddings,
            corpus,
            expansion,
            model: report.model,
            holdout_macro_f1: report.holdout_macro_f1,
        })
    }

    pub fn keywords(&self) -> &KeywordSet {
        &self.expansion.keywords
    }

    /// A crawl configuration seeded from the world's designated seeds.
    pub fn crawl_config(&self, policy: Policy, budget: u64, rng_seed: u64) -> CrawlConfig {
        CrawlConfig {
            seeds: self.world.seed_urls(),
            budget,
            policy,
            rng_seed,
            ..Default::default()
        }
    }

    pub fn run(&self, cfg: &CrawlConfig) -> Result<CrawlResult> {
        let truth = GroundTruth(&self.world);
        let reward: &dyn RelevanceEstimator = match self.config.reward {
            RewardSource::Model => &self.model,
            RewardSource::GroundTruth => &truth,
        };
        let ctx = CrawlContext {
            keywords: self.keywords(),
            features: &self.model,
            reward,
        };
        crawl(cfg, &ctx, &mut SimSource::new(&self.world))
    }
}
