//! The traversed web forest, its closure, and the shared state-action features.
//!
//! Every fetched URL is a node that remembers its discovering parent, so each
//! node has a unique path back to a seed. Path statistics are maintained
//! incrementally from the parent when a node is registered.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embeddings::KeywordSet;
use crate::error::{Error, Result};
use crate::fetch::url::domain_of;
use crate::reward::{PageText, RelevanceEstimator, DEFAULT_MAX_LEN};
use crate::text::tokenize;

/// Number of features with hub features enabled.
pub const FULL_DIM: usize = 8;
/// Number of features with hub features disabled.
pub const NO_HUB_DIM: usize = 6;

pub const FEATURE_NAMES: [&str; FULL_DIM] = [
    "parent_reward",
    "inv_dist_relevant",
    "path_relevance_ratio",
    "kw_in_url",
    "kw_in_anchor",
    "title_relevance",
    "domain_relevance_ratio",
    "domain_known",
];

/// Shared state-action representation: three path features, three action
/// features, and optionally two hub features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct StateActionVector {
    values: [f64; FULL_DIM],
    len: u8,
}

impl StateActionVector {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() != FULL_DIM && values.len() != NO_HUB_DIM {
            return Err(Error::DimensionMismatch(FULL_DIM, values.len()));
        }
        let mut v = [0.0; FULL_DIM];
        v[..values.len()].copy_from_slice(values);
        Ok(Self {
            values: v,
            len: values.len() as u8,
        })
    }

    pub fn from_parts(state: [f64; 3], action: [f64; 3], hub: Option<[f64; 2]>) -> Self {
        let mut values = [0.0; FULL_DIM];
        values[..3].copy_from_slice(&state);
        values[3..6].copy_from_slice(&action);
        let len = match hub {
            Some(h) => {
                values[6..].copy_from_slice(&h);
                FULL_DIM
            }
            None => NO_HUB_DIM,
        };
        Self {
            values,
            len: len as u8,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.as_slice()[feature]
    }

    pub fn state(&self) -> [f64; 3] {
        [self.values[0], self.values[1], self.values[2]]
    }
}

impl From<StateActionVector> for Vec<f64> {
    fn from(v: StateActionVector) -> Self {
        v.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for StateActionVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub parent: Option<String>,
    pub reward: u8,
    pub depth: u32,
    /// Hops up the path to the nearest relevant node (0 if this node is
    /// relevant), `None` when no node on the path is relevant.
    pub dist_to_relevant: Option<u32>,
    pub path_relevant: u32,
    pub path_length: u32,
    pub domain: String,
    /// Timestep at which the node was fetched; seeds are fetched at 0.
    pub fetched_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStats {
    pub fetched: u32,
    pub relevant: u32,
}

/// An outlink of a fetched page, not yet fetched itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlinkCandidate {
    pub url: String,
    pub anchor: String,
    /// Title of the target when known (e.g. a link title attribute).
    pub title: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CrawlGraph {
    nodes: HashMap<String, NodeRecord>,
    domain_stats: HashMap<String, DomainStats>,
    seeds: Vec<String>,
    timestep: u64,
}

impl CrawlGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a seed; seeds start with a positive reward.
    pub fn register_seed(&mut self, url: &str) -> Result<&NodeRecord> {
        self.register_fetch(None, url, 1)
    }

    /// Adds a fetched URL under `parent` (`None` for a seed). Non-seed fetches
    /// advance the timestep.
    pub fn register_fetch(&mut self, parent: Option<&str>, url: &str, reward: u8) -> Result<&NodeRecord> {
        if reward > 1 {
            return Err(Error::InvalidParameter(format!("reward must be 0 or 1, got {reward}")));
        }
        if self.nodes.contains_key(url) {
            return Err(Error::ClosureViolation { url: url.to_string() });
        }
        let domain = domain_of(url)?;
        let relevant = reward == 1;
        let record = match parent {
            None => NodeRecord {
                parent: None,
                reward,
                depth: 0,
                dist_to_relevant: relevant.then_some(0),
                path_relevant: u32::from(reward),
                path_length: 1,
                domain: domain.clone(),
                fetched_at: self.timestep,
            },
            Some(p) => {
                let parent_rec = self.nodes.get(p).ok_or_else(|| {
                    Error::GraphIntegrity(format!("parent {p:?} of {url:?} was never fetched"))
                })?;
                NodeRecord {
                    parent: Some(p.to_string()),
                    reward,
                    depth: parent_rec.depth + 1,
                    dist_to_relevant: if relevant {
                        Some(0)
                    } else {
                        parent_rec.dist_to_relevant.map(|d| d + 1)
                    },
                    path_relevant: parent_rec.path_relevant + u32::from(reward),
                    path_length: parent_rec.path_length + 1,
                    domain: domain.clone(),
                    fetched_at: self.timestep + 1,
                }
            }
        };
        let stats = self.domain_stats.entry(domain).or_default();
        stats.fetched += 1;
        stats.relevant += u32::from(reward);
        if parent.is_some() {
            self.timestep += 1;
        } else {
            self.seeds.push(url.to_string());
        }
        Ok(self.nodes.entry(url.to_string()).or_insert(record))
    }

    pub fn contains(&self, url: &str) -> bool {
        self.nodes.contains_key(url)
    }

    pub fn node(&self, url: &str) -> Option<&NodeRecord> {
        self.nodes.get(url)
    }

    pub fn closure_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn closure(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn seeds(&self) -> &[String] {
        &self.seeds
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn domain_stats(&self, domain: &str) -> DomainStats {
        self.domain_stats.get(domain).copied().unwrap_or_default()
    }

    pub fn domains(&self) -> impl Iterator<Item = (&str, &DomainStats)> {
        self.domain_stats.iter().map(|(d, s)| (d.as_str(), s))
    }

    /// Nodes from the seed down to `url`, inclusive.
    pub fn path(&self, url: &str) -> Result<Vec<&str>> {
        let mut path = Vec::new();
        let mut cur = Some(url);
        while let Some(u) = cur {
            let (key, rec) = self
                .nodes
                .get_key_value(u)
                .ok_or_else(|| Error::GraphIntegrity(format!("{u:?} is not in the closure")))?;
            path.push(key.as_str());
            cur = rec.parent.as_deref();
        }
        path.reverse();
        Ok(path)
    }

    /// (parent reward, inverse distance to a relevant node, path relevance ratio)
    /// for links extracted from `parent`.
    ///
    /// The distance is counted in hops from the candidate link: a relevant
    /// parent is one hop away (feature 1), its irrelevant child two hops
    /// (feature 0.5). No relevant node on the path gives 0.
    pub fn state_features(&self, parent: &str) -> Result<[f64; 3]> {
        let rec = self.nodes.get(parent).ok_or_else(|| {
            Error::GraphIntegrity(format!("state features requested for unfetched {parent:?}"))
        })?;
        let s2 = match rec.dist_to_relevant {
            Some(d) => 1.0 / (1.0 + d as f64),
            None => 0.0,
        };
        Ok([
            f64::from(rec.reward),
            s2,
            f64::from(rec.path_relevant) / f64::from(rec.path_length),
        ])
    }

    /// (domain relevance ratio, domain known indicator) for the URL's domain.
    pub fn hub_features(&self, url: &str) -> Result<[f64; 2]> {
        Ok(self.hub_features_for_domain(&domain_of(url)?))
    }

    pub fn hub_features_for_domain(&self, domain: &str) -> [f64; 2] {
        match self.domain_stats.get(domain) {
            Some(s) if s.fetched > 0 => [f64::from(s.relevant) / f64::from(s.fetched), 1.0],
            _ => [0.0, 0.5],
        }
    }
}

/// Builds state-action vectors from the graph and a relevance estimator.
#[derive(Debug, Clone, Copy)]
pub struct FeatureExtractor {
    pub hub_features: bool,
    pub max_len: usize,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self {
            hub_features: true,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl FeatureExtractor {
    pub fn dimension(&self) -> usize {
        if self.hub_features {
            FULL_DIM
        } else {
            NO_HUB_DIM
        }
    }

    /// Action features (keyword in URL, keyword in anchor, title relevance).
    /// Without a known title the anchor text stands in for it.
    pub fn action_features(
        &self,
        candidate: &OutlinkCandidate,
        estimator: &dyn RelevanceEstimator,
        keywords: &KeywordSet,
    ) -> [f64; 3] {
        let a1 = keywords.any_substring_of(&candidate.url.to_lowercase());
        let a2 = tokenize(&candidate.anchor).iter().any(|t| keywords.contains(t));
        let title = candidate.title.as_deref().unwrap_or(&candidate.anchor);
        let page = PageText::title_only(&candidate.url, title, self.max_len);
        let a3 = estimator.relevance_probability(&page, keywords);
        [f64::from(u8::from(a1)), f64::from(u8::from(a2)), a3]
    }

    pub fn build_state_action(
        &self,
        graph: &CrawlGraph,
        parent: &str,
        candidate: &OutlinkCandidate,
        estimator: &dyn RelevanceEstimator,
        keywords: &KeywordSet,
    ) -> Result<StateActionVector> {
        let state = graph.state_features(parent)?;
        let action = self.action_features(candidate, estimator, keywords);
        let hub = if self.hub_features {
            Some(graph.hub_features(&candidate.url)?)
        } else {
            None
        };
        Ok(StateActionVector::from_parts(state, action, hub))
    }

    /// Vector for selecting a seed from the empty graph: all state features are zero.
    pub fn seed_vector(
        &self,
        graph: &CrawlGraph,
        seed: &OutlinkCandidate,
        estimator: &dyn RelevanceEstimator,
        keywords: &KeywordSet,
    ) -> Result<StateActionVector> {
        let action = self.action_features(seed, estimator, keywords);
        let hub = if self.hub_features {
            Some(graph.hub_features(&seed.url)?)
        } else {
            None
        };
        Ok(StateActionVector::from_parts([0.0; 3], action, hub))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl RelevanceEstimator for Fixed {
        fn relevance_probability(&self, _: &PageText, _: &KeywordSet) -> f64 {
            self.0
        }
        fn threshold(&self) -> f64 {
            0.5
        }
    }

    const SEED: &str = "https://en.wikipedia.org/wiki/Sport";
    const A: &str = "https://en.wikipedia.org/wiki/Football";
    const B: &str = "https://en.wikipedia.org/wiki/Basketball";
    const C: &str = "https://en.wikipedia.org/wiki/Stadium_architecture";

    fn fig2() -> CrawlGraph {
        let mut g = CrawlGraph::new();
        g.register_seed(SEED).unwrap();
        g.register_fetch(Some(SEED), A, 1).unwrap();
        g.register_fetch(Some(A), B, 1).unwrap();
        g.register_fetch(Some(A), C, 0).unwrap();
        g
    }

    #[test]
    fn seed_record() {
        let mut g = CrawlGraph::new();
        let rec = g.register_seed(SEED).unwrap().clone();
        assert_eq!(rec.depth, 0);
        assert_eq!(rec.reward, 1);
        assert_eq!(rec.dist_to_relevant, Some(0));
        assert_eq!(g.state_features(SEED).unwrap(), [1.0, 1.0, 1.0]);
        assert_eq!(g.timestep(), 0);
    }

    #[test]
    fn figure_two_state() {
        let g = fig2();
        assert_eq!(g.node(C).unwrap().dist_to_relevant, Some(1));
        assert_eq!(g.path(C).unwrap(), vec![SEED, A, C]);
        let s = g.state_features(C).unwrap();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 0.5);
        assert!((s[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.hub_features("https://en.wikipedia.org/wiki/Goal").unwrap(), [0.75, 1.0]);
        assert_eq!(g.timestep(), 3);
    }

    #[test]
    fn relevant_parent_has_unit_distance_feature() {
        let g = fig2();
        let s = g.state_features(A).unwrap();
        assert_eq!((s[0], s[1]), (1.0, 1.0));
    }

    #[test]
    fn no_relevant_ancestor() {
        let mut g = CrawlGraph::new();
        g.register_fetch(None, "http://a.com/", 0).unwrap();
        g.register_fetch(Some("http://a.com/"), "http://a.com/x", 0).unwrap();
        assert_eq!(g.state_features("http://a.com/x").unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn closure_and_integrity_errors() {
        let mut g = fig2();
        assert!(matches!(g.register_fetch(Some(A), C, 1), Err(Error::ClosureViolation { .. })));
        assert!(matches!(
            g.register_fetch(Some("http://nowhere.org/"), "http://x.org/", 1),
            Err(Error::GraphIntegrity(_))
        ));
        assert!(matches!(g.state_features("http://x.org/"), Err(Error::GraphIntegrity(_))));
        assert!(matches!(g.register_fetch(Some(A), "not a url", 1), Err(Error::MalformedUrl(_))));
    }

    #[test]
    fn unknown_domain_hub_features() {
        let g = fig2();
        assert_eq!(g.hub_features("http://never.example/").unwrap(), [0.0, 0.5]);
        assert!(g.hub_features("::").is_err());
    }

    #[test]
    fn figure_two_vector() {
        let g = fig2();
        let kw = KeywordSet::new(["football", "basketball"]).unwrap();
        let d = OutlinkCandidate {
            url: "https://en.wikipedia.org/wiki/Concrete".into(),
            anchor: "building materials".into(),
            title: None,
        };
        let x = FeatureExtractor::default()
            .build_state_action(&g, C, &d, &Fixed(0.3), &kw)
            .unwrap();
        let expected = [0.0, 0.5, 2.0 / 3.0, 0.0, 0.0, 0.3, 0.75, 1.0];
        for (a, b) in x.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let nh = FeatureExtractor {
            hub_features: false,
            ..Default::default()
        }
        .build_state_action(&g, C, &d, &Fixed(0.3), &kw)
        .unwrap();
        assert_eq!(nh.len(), NO_HUB_DIM);
    }

    #[test]
    fn anchor_keyword_detected() {
        let kw = KeywordSet::new(["football"]).unwrap();
        let cand = OutlinkCandidate {
            url: "http://news.example/today".into(),
            anchor: "best football news".into(),
            title: None,
        };
        let a = FeatureExtractor::default().action_features(&cand, &Fixed(0.1), &kw);
        assert_eq!(a, [0.0, 1.0, 0.1]);
    }

    #[test]
    fn seed_vector_has_zero_state() {
        let g = CrawlGraph::new();
        let kw = KeywordSet::new(["sport"]).unwrap();
        let seed = OutlinkCandidate {
            url: SEED.into(),
            anchor: String::new(),
            title: Some("Sport".into()),
        };
        let x = FeatureExtractor::default().seed_vector(&g, &seed, &Fixed(0.9), &kw).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.9, 0.0, 0.5]);
    }

    #[test]
    fn vector_serde() {
        let x = StateActionVector::from_parts([1.0, 0.5, 0.25], [0.0, 1.0, 0.3], Some([0.75, 1.0]));
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, "[1.0,0.5,0.25,0.0,1.0,0.3,0.75,1.0]");
        let back: StateActionVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
        assert!(serde_json::from_str::<StateActionVector>("[1.0,2.0]").is_err());
    }
}
