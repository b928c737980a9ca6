//! Keyword Vector features, the relevance model and the binary reward.
//!
//! A page is summarised by three numbers: the keyword count relative to the
//! mean count `mu` of relevant training pages (clamped to 1), the keyword
//! density, and whether a keyword occurs in the URL. A logistic model over
//! those features estimates relevance; the reward is that estimate
//! thresholded.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::KeywordSet;
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Default cap on the number of body tokens kept per page.
pub const DEFAULT_MAX_LEN: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct PageText {
    pub url: String,
    pub title: Vec<String>,
    /// Text tokens, truncated to the configured maximum length.
    pub body: Vec<String>,
    /// Token count before truncation.
    pub n_p: usize,
}

impl PageText {
    pub fn new(url: impl Into<String>, title: Vec<String>, mut body: Vec<String>, max_len: usize) -> Self {
        let n_p = body.len();
        body.truncate(max_len);
        Self {
            url: url.into(),
            title,
            body,
            n_p,
        }
    }

    /// Full page text: title tokens first, then the body.
    pub fn from_page(url: &str, title: &str, text: &str, max_len: usize) -> Self {
        let title = tokenize(title);
        let mut body = title.clone();
        body.extend(tokenize(text));
        Self::new(url, title, body, max_len)
    }

    /// Title-only text, used for the relevance estimate of an unfetched link.
    pub fn title_only(url: &str, title: &str, max_len: usize) -> Self {
        let title = tokenize(title);
        Self::new(url, title.clone(), title, max_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeywordVector {
    pub kv1: f64,
    pub kv2: f64,
    pub kv3: f64,
}

impl KeywordVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.kv1, self.kv2, self.kv3]
    }
}

/// Occurrences, with multiplicity, of any keyword in `text`.
pub fn keyword_count(text: &[String], keywords: &KeywordSet) -> usize {
    text.iter().filter(|t| keywords.contains(t)).count()
}

pub fn keyword_vector(page: &PageText, keywords: &KeywordSet, mu: f64) -> Result<KeywordVector> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let count = keyword_count(&page.body, keywords) as f64;
    let kv2 = if page.n_p == 0 {
        0.0
    } else {
        count / page.n_p as f64
    };
    let kv3 = if keywords.any_substring_of(&page.url.to_lowercase()) {
        1.0
    } else {
        0.0
    };
    Ok(KeywordVector {
        kv1: (count / mu).min(1.0),
        kv2,
        kv3,
    })
}

/// Anything that can score page relevance. The crawler only needs this
/// interface, so a stronger classifier can replace the logistic model.
pub trait RelevanceEstimator: Send + Sync {
    /// Probability in `[0, 1]` that the page is relevant.
    fn relevance_probability(&self, page: &PageText, keywords: &KeywordSet) -> f64;

    fn threshold(&self) -> f64;

    /// Binary reward: 1 iff the probability reaches the threshold.
    fn reward(&self, page: &PageText, keywords: &KeywordSet) -> u8 {
        u8::from(self.relevance_probability(page, keywords) >= self.threshold())
    }

    /// Maximum number of body tokens the estimator looks at.
    fn max_len(&self) -> usize {
        DEFAULT_MAX_LEN
    }
}

/// Logistic regression over the Keyword Vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceModel {
    pub weights: [f64; 3],
    pub bias: f64,
    pub mu: f64,
    pub threshold: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RelevanceModel {
    pub fn score_kv(&self, kv: &KeywordVector) -> f64 {
        let z = self.bias
            + self
                .weights
                .iter()
                .zip(kv.as_array())
                .map(|(w, x)| w * x)
                .sum::<f64>();
        sigmoid(z)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json("model", e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self =
            serde_json::from_str(&raw).map_err(|e| Error::json(path.display().to_string(), e))?;
        if !(model.mu > 0.0) || !(model.threshold > 0.0 && model.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "{}: mu must be positive and threshold in (0, 1)",
                path.display()
            )));
        }
        Ok(model)
    }
}

impl RelevanceEstimator for RelevanceModel {
    fn relevance_probability(&self, page: &PageText, keywords: &KeywordSet) -> f64 {
        let kv = keyword_vector(page, keywords, self.mu).expect("trained model has mu > 0");
        self.score_kv(&kv)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn max_len(&self) -> usize {
        self.max_len
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Every `holdout_every`-th page of each class is held out for threshold selection.
    pub holdout_every: usize,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            // Features lie in [0, 1]^3, so the loss gradient is 1-Lipschitz
            // and a unit step still descends monotonically.
            learning_rate: 1.0,
            holdout_every: 5,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RelevanceModel,
    /// Mean cross-entropy on the training split before each epoch's update.
    pub losses: Vec<f64>,
    pub degenerate: bool,
    pub holdout_macro_f1: f64,
}

/// Macro-averaged F1 of the rule `score >= threshold`.
pub fn macro_f1(scores: &[(f64, u8)], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(p, y) in scores {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    (f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0
}

fn select_threshold(scores: &[(f64, u8)]) -> f64 {
    let mut probs: Vec<f64> = scores.iter().map(|s| s.0).collect();
    probs.sort_by(f64::total_cmp);
    probs.dedup();
    let mut candidates = Vec::with_capacity(probs.len() + 1);
    candidates.push(probs[0] / 2.0);
    candidates.extend(probs.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push((probs[probs.len() - 1] + 1.0) / 2.0);

    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.5);
    for c in candidates {
        let f = macro_f1(scores, c);
        let closer = (c - 0.5).abs() < (best.1 - 0.5).abs();
        if f > best.0 + 1e-12 || ((f - best.0).abs() <= 1e-12 && closer) {
            best = (f, c);
        }
    }
    best.1.clamp(1e-9, 1.0 - 1e-9)
}

fn cross_entropy(model: &RelevanceModel, data: &[([f64; 3], u8)]) -> f64 {
    let eps = 1e-12;
    data.iter()
        .map(|(x, y)| {
            let p = model.score_kv(&KeywordVector {
                kv1: x[0],
                kv2: x[1],
                kv3: x[2],
            });
            if *y == 1 {
                -(p.max(eps)).ln()
            } else {
                -((1.0 - p).max(eps)).ln()
            }
        })
        .sum::<f64>()
        / data.len() as f64
}

/// Fits the relevance model. `mu` is the mean keyword count over `relevant`.
pub fn train(
    relevant: &[PageText],
    irrelevant: &[PageText],
    keywords: &KeywordSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if relevant.is_empty() || irrelevant.is_empty() {
        return Err(Error::InvalidParameter(
            "training needs both relevant and irrelevant pages".into(),
        ));
    }
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) || cfg.holdout_every < 2 {
        return Err(Error::InvalidParameter("invalid training configuration".into()));
    }
    let total: usize = relevant.iter().map(|p| keyword_count(&p.body, keywords)).sum();
    let mut mu = total as f64 / relevant.len() as f64;
    if mu == 0.0 {
        log::warn!("relevant pages contain no keywords; using mu = 1");
        mu = 1.0;
    }

    let mut train_set = Vec::new();
    let mut holdout = Vec::new();
    for (label, pages) in [(1u8, relevant), (0u8, irrelevant)] {
        for (i, page) in pages.iter().enumerate() {
            let kv = keyword_vector(page, keywords, mu)?.as_array();
            if i % cfg.holdout_every == cfg.holdout_every - 1 {
                holdout.push((kv, label));
            } else {
                train_set.push((kv, label));
            }
        }
    }
    let has_both = |set: &[([f64; 3], u8)]| {
        set.iter().any(|s| s.1 == 1) && set.iter().any(|s| s.1 == 0)
    };
    if !has_both(&holdout) || !has_both(&train_set) {
        // Too few pages to hold any out: fit and select on everything.
        train_set.append(&mut holdout);
        holdout = train_set.clone();
    }

    let first = train_set[0].0;
    let degenerate = train_set.iter().chain(&holdout).all(|(x, _)| *x == first);
    if degenerate {
        log::warn!("training degenerate: every page has the same keyword vector");
        let positives = train_set.iter().filter(|s| s.1 == 1).count() as f64;
        let prior = (positives / train_set.len() as f64).clamp(1e-6, 1.0 - 1e-6);
        let bias = (prior / (1.0 - prior)).ln();
        // Predict the majority class for every page.
        let threshold = if prior < 0.5 {
            (prior + 1.0) / 2.0
        } else {
            prior / 2.0
        };
        let model = RelevanceModel {
            weights: [0.0; 3],
            bias,
            mu,
            threshold,
            max_len: cfg.max_len,
        };
        let scores: Vec<(f64, u8)> = holdout.iter().map(|(_, y)| (prior, *y)).collect();
        return Ok(TrainReport {
            holdout_macro_f1: macro_f1(&scores, threshold),
            losses: vec![cross_entropy(&model, &train_set)],
            model,
            degenerate: true,
        });
    }

    let mut model = RelevanceModel {
        weights: [0.0; 3],
        bias: 0.0,
        mu,
        threshold: 0.5,
        max_len: cfg.max_len,
    };
    let n = train_set.len() as f64;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        losses.push(cross_entropy(&model, &train_set));
        let mut grad_w = [0.0; 3];
        let mut grad_b = 0.0;
        for (x, y) in &train_set {
            let p = model.score_kv(&KeywordVector {
                kv1: x[0],
                kv2: x[1],
                kv3: x[2],
            });
            let err = p - f64::from(*y);
            for k in 0..3 {
                grad_w[k] += err * x[k];
            }
            grad_b += err;
        }
        for k in 0..3 {
            model.weights[k] -= cfg.learning_rate * grad_w[k] / n;
        }
        model.bias -= cfg.learning_rate * grad_b / n;
    }

    let scores: Vec<(f64, u8)> = holdout
        .iter()
        .map(|(x, y)| {
            let kv = KeywordVector {
                kv1: x[0],
                kv2: x[1],
                kv3: x[2],
            };
            (model.score_kv(&kv), *y)
        })
        .collect();
    model.threshold = select_threshold(&scores);
    Ok(TrainReport {
        holdout_macro_f1: macro_f1(&scores, model.threshold),
        model,
        losses,
        degenerate: false,
    })
}

/// One record of a labeled training corpus (JSONL).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabeledPage {
    pub url: String,
    pub title: String,
    pub text: String,
    pub label: u8,
}

impl LabeledPage {
    /// Title and text tokens, as used for keyword expansion.
    pub fn tokens(&self) -> Vec<String> {
        let mut t = tokenize(&self.title);
        t.extend(tokenize(&self.text));
        t
    }

    pub fn page_text(&self, max_len: usize) -> PageText {
        PageText::from_page(&self.url, &self.title, &self.text, max_len)
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledPage>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pages = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let page: LabeledPage = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
        if page.label > 1 {
            return Err(Error::InvalidParameter(format!(
                "{}:{}: label must be 0 or 1",
                path.display(),
                i + 1
            )));
        }
        pages.push(page);
    }
    Ok(pages)
}

pub fn write_corpus(path: impl AsRef<Path>, pages: &[LabeledPage]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in pages {
        out.push_str(&serde_json::to_string(p).map_err(|e| Error::json("corpus", e))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Splits a labeled corpus and trains on it.
pub fn train_on_corpus(
    corpus: &[LabeledPage],
    keywords: &KeywordSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let (rel, irr): (Vec<_>, Vec<_>) = corpus.iter().partition(|p| p.label == 1);
    let rel: Vec<PageText> = rel.iter().map(|p| p.page_text(cfg.max_len)).collect();
    let irr: Vec<PageText> = irr.iter().map(|p| p.page_text(cfg.max_len)).collect();
    train(&rel, &irr, keywords, cfg)
}
