//! Focused web crawling with Double DQN and an online decision-tree frontier.
//!
//! The crawler treats each fetch as an action in a Markov decision process.
//! Frontier URLs live in the leaves of a regression tree that splits on
//! reward variance, so each step scores one representative per leaf instead
//! of the whole frontier.

pub mod crawler;
pub mod embeddings;
pub mod error;
pub mod fetch;
pub mod frontier;
pub mod graph;
pub mod qlearn;
pub mod report;
pub mod reward;
pub mod scenario;
pub mod text;

pub use crawler::{crawl, metrics, CrawlConfig, CrawlContext, CrawlResult, CrawlStatus, Metrics, Policy, StepStats};
pub use embeddings::{cosine, expand_keywords, threshold_b, EmbeddingTable, Expansion, KeywordSet};
pub use error::{Error, Result};
pub use fetch::{FetchError, Page, PageSource};
pub use frontier::{best_split, FrontierEntry, SelectMode, Split, TreeFrontier};
pub use graph::{CrawlGraph, FeatureExtractor, StateActionVector};
pub use qlearn::{AgentConfig, DdqnAgent, QFunction, QNetwork};
pub use reward::{RelevanceEstimator, RelevanceModel};
pub use scenario::{Scenario, ScenarioConfig};
