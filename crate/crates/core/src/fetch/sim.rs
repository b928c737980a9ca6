//! Deterministic synthetic web graph with topical locality, hub pages and
//! keyword-bearing text, used to run crawls offline.
//!
//! Pages are grouped into sites. Most relevant pages live in a small set of
//! larger topic sites. Each outlink of a page is, with
//! probability `locality`, drawn from pages of the same class (preferring the
//! page's own site), and otherwise drawn uniformly from the whole world.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FetchError, Outlink, Page, PageSource};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::reward::LabeledPage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub pages: usize,
    pub relevant_fraction: f64,
    pub locality: f64,
    pub mean_out_degree: f64,
    /// Out-degree of relevant pages relative to the mean. The overall mean
    /// is preserved by raising the out-degree of irrelevant pages.
    pub relevant_out_degree_ratio: f64,
    pub site_size: usize,
    /// Pages per topic site.
    pub topic_site_size: usize,
    /// Share of relevant pages placed in topic sites.
    pub topic_site_share: f64,
    /// Target fraction of relevant pages within a topic site.
    pub topic_site_purity: f64,
    /// Probability that a same-class link stays inside the page's own site.
    pub site_affinity: f64,
    /// Fraction of irrelevant pages turned into hubs.
    pub hub_rate: f64,
    /// Fraction of a hub's outlinks that point at relevant pages.
    pub hub_relevant_share: f64,
    pub topic_vocab: usize,
    pub background_vocab: usize,
    pub title_len: usize,
    pub body_len_min: usize,
    pub body_len_max: usize,
    pub anchor_len: usize,
    pub title_keyword_rate: f64,
    pub body_keyword_rate: f64,
    pub url_keyword_rate: f64,
    pub anchor_keyword_rate: f64,
    /// Topic-token rate in text about irrelevant pages.
    pub noise_keyword_rate: f64,
    pub seeds: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            pages: 10_000,
            relevant_fraction: 0.05,
            locality: 0.8,
            mean_out_degree: 10.0,
            relevant_out_degree_ratio: 0.25,
            site_size: 10,
            topic_site_size: 20,
            topic_site_share: 0.8,
            topic_site_purity: 0.5,
            site_affinity: 0.5,
            hub_rate: 0.01,
            hub_relevant_share: 0.7,
            topic_vocab: 12,
            background_vocab: 3000,
            title_len: 6,
            body_len_min: 60,
            body_len_max: 140,
            anchor_len: 3,
            title_keyword_rate: 0.5,
            body_keyword_rate: 0.15,
            url_keyword_rate: 0.4,
            anchor_keyword_rate: 0.4,
            noise_keyword_rate: 0.01,
            seeds: 10,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.pages < 10 {
            return bad(format!("a world needs at least 10 pages, got {}", self.pages));
        }
        if !(self.relevant_fraction > 0.0 && self.relevant_fraction < 1.0) {
            return bad(format!(
                "relevant fraction must lie in (0, 1), got {}",
                self.relevant_fraction
            ));
        }
        for (name, v) in [
            ("locality", self.locality),
            ("topic_site_share", self.topic_site_share),
            ("site_affinity", self.site_affinity),
            ("hub_rate", self.hub_rate),
            ("hub_relevant_share", self.hub_relevant_share),
            ("title_keyword_rate", self.title_keyword_rate),
            ("body_keyword_rate", self.body_keyword_rate),
            ("url_keyword_rate", self.url_keyword_rate),
            ("anchor_keyword_rate", self.anchor_keyword_rate),
            ("noise_keyword_rate", self.noise_keyword_rate),
        ] {
            check_unit(name, v)?;
        }
        if !(self.topic_site_purity > 0.0 && self.topic_site_purity <= 1.0) {
            return bad("topic site purity must lie in (0, 1]".into());
        }
        if !(self.mean_out_degree >= 1.0) {
            return bad("mean out-degree below 1 cannot keep the world reachable from its seeds".into());
        }
        if !(self.relevant_out_degree_ratio > 0.0) {
            return bad("relevant out-degree ratio must be positive".into());
        }
        if self.relevant_fraction * self.relevant_out_degree_ratio >= 1.0 {
            return bad("relevant pages alone would exceed the mean out-degree".into());
        }
        if self.site_size == 0 || self.topic_site_size == 0 || self.topic_vocab == 0 || self.background_vocab == 0 {
            return bad("site size and vocabularies must be non-empty".into());
        }
        if self.body_len_min == 0 || self.body_len_min > self.body_len_max || self.title_len == 0 || self.anchor_len == 0 {
            return bad("text lengths must be positive with min <= max".into());
        }
        if self.seeds == 0 {
            return bad("at least one seed is required".into());
        }
        let relevant = self.relevant_count();
        if self.seeds > relevant {
            return bad(format!(
                "{} seeds requested but the world has only {relevant} relevant pages",
                self.seeds
            ));
        }
        Ok(())
    }

    pub fn relevant_count(&self) -> usize {
        ((self.pages as f64 * self.relevant_fraction).round() as usize).clamp(1, self.pages - 1)
    }
}

pub fn topic_token(i: usize) -> String {
    format!("topic{i:03}")
}

pub fn background_token(i: usize) -> String {
    format!("word{i:04}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimLink {
    pub target: usize,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPage {
    pub id: usize,
    pub url: String,
    pub domain: String,
    pub relevant: bool,
    pub hub: bool,
    pub title: String,
    pub body: String,
    pub outlinks: Vec<SimLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    params: SimParams,
    seed: u64,
    seeds: Vec<usize>,
    pages: usize,
}

/// A generated world. Page ids index `pages`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub params: SimParams,
    pub seed: u64,
    pub seeds: Vec<usize>,
    pub pages: Vec<SimPage>,
    index: HashMap<String, usize>,
}

struct TextGen<'a> {
    p: &'a SimParams,
}

impl TextGen<'_> {
    fn token<R: Rng>(&self, rng: &mut R, topic_rate: f64) -> String {
        if rng.gen_bool(topic_rate) {
            topic_token(rng.gen_range(0..self.p.topic_vocab))
        } else {
            background_token(rng.gen_range(0..self.p.background_vocab))
        }
    }

    fn tokens<R: Rng>(&self, rng: &mut R, n: usize, topic_rate: f64) -> String {
        (0..n).map(|_| self.token(rng, topic_rate)).collect::<Vec<_>>().join(" ")
    }

    fn anchor<R: Rng>(&self, rng: &mut R, target_relevant: bool) -> String {
        let rate = if target_relevant {
            self.p.anchor_keyword_rate
        } else {
            self.p.noise_keyword_rate
        };
        self.tokens(rng, self.p.anchor_len, rate)
    }
}

impl SimWorld {
    pub fn generate(params: &SimParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let p = params;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = TextGen { p };
        let n = p.pages;
        // Site layout: topic sites first, then ordinary sites, then the
        // page-to-site map is permuted so ids carry no structure.
        let n_rel = p.relevant_count();
        let n_in_topic = (n_rel as f64 * p.topic_site_share).round() as usize;
        let topic_size = p.topic_site_size.min(n);
        let n_topic_sites = ((n_in_topic as f64 / (topic_size as f64 * p.topic_site_purity)).ceil() as usize)
            .min(n / topic_size);
        let mut site_vec = Vec::with_capacity(n);
        for s in 0..n_topic_sites {
            site_vec.extend(std::iter::repeat_n(s, topic_size));
        }
        let ordinary = n - site_vec.len();
        for k in 0..ordinary {
            site_vec.push(n_topic_sites + k / p.site_size);
        }
        let n_sites = n_topic_sites + ordinary.div_ceil(p.site_size);
        site_vec.shuffle(&mut rng);
        let site_of = |id: usize| site_vec[id];
        let topic_site: Vec<bool> = (0..n_sites).map(|s| s < n_topic_sites).collect();

        let mut relevant = vec![false; n];
        let mut topic_pool: Vec<usize> = (0..n).filter(|&i| topic_site[site_of(i)]).collect();
        topic_pool.shuffle(&mut rng);
        let in_topic = n_in_topic.min(topic_pool.len());
        for &i in &topic_pool[..in_topic] {
            relevant[i] = true;
        }
        let mut rest: Vec<usize> = (0..n).filter(|&i| !topic_site[site_of(i)]).collect();
        rest.extend(topic_pool[in_topic..].iter().copied());
        rest.shuffle(&mut rng);
        for &i in &rest[..n_rel - in_topic] {
            relevant[i] = true;
        }

        // Hubs: irrelevant pages, taken from topic sites first.
        let n_irr = n - n_rel;
        let n_hubs = (n_irr as f64 * p.hub_rate).round() as usize;
        let mut hub_pool: Vec<usize> = (0..n).filter(|&i| !relevant[i] && topic_site[site_of(i)]).collect();
        hub_pool.shuffle(&mut rng);
        let mut others: Vec<usize> = (0..n).filter(|&i| !relevant[i] && !topic_site[site_of(i)]).collect();
        others.shuffle(&mut rng);
        hub_pool.extend(others);
        let mut hub = vec![false; n];
        for &i in &hub_pool[..n_hubs.min(hub_pool.len())] {
            hub[i] = true;
        }

        // Text and URLs.
        let mut pages = Vec::with_capacity(n);
        for id in 0..n {
            let rel = relevant[id];
            let (title_rate, body_rate, url_rate) = if rel {
                (p.title_keyword_rate, p.body_keyword_rate, p.url_keyword_rate)
            } else {
                (p.noise_keyword_rate, p.noise_keyword_rate, p.noise_keyword_rate)
            };
            let domain = format!("site{:05}.test", site_of(id));
            let slug = text.token(&mut rng, url_rate);
            let url = format!("http://{domain}/{slug}-n{id}");
            let title = text.tokens(&mut rng, p.title_len, title_rate);
            let len = rng.gen_range(p.body_len_min..=p.body_len_max);
            let body = text.tokens(&mut rng, len, body_rate);
            pages.push(SimPage {
                id,
                url,
                domain,
                relevant: rel,
                hub: hub[id],
                title,
                body,
                outlinks: Vec::new(),
            });
        }

        // Links.
        let rel_pages: Vec<usize> = (0..n).filter(|&i| relevant[i]).collect();
        let irr_pages: Vec<usize> = (0..n).filter(|&i| !relevant[i]).collect();
        let mut site_members: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; n_sites];
        for i in 0..n {
            site_members[site_of(i)][usize::from(relevant[i])].push(i);
        }
        let frac = n_rel as f64 / n as f64;
        let d_rel = p.mean_out_degree * p.relevant_out_degree_ratio;
        let d_irr = (p.mean_out_degree - frac * d_rel) / (1.0 - frac);

        let pick_class = |rng: &mut ChaCha8Rng, id: usize, class_rel: bool| -> usize {
            let members = &site_members[site_of(id)][usize::from(class_rel)];
            let has_site_peer = members.iter().any(|&m| m != id);
            if has_site_peer && rng.gen_bool(p.site_affinity) {
                *members.choose(rng).expect("non-empty")
            } else if class_rel {
                *rel_pages.choose(rng).expect("non-empty")
            } else {
                *irr_pages.choose(rng).expect("non-empty")
            }
        };

        for id in 0..n {
            let d = if relevant[id] { d_rel } else { d_irr };
            let k = ((d * rng.gen_range(0.5..1.5)).round() as usize).max(1);
            let mut targets: Vec<usize> = Vec::with_capacity(k);
            for _ in 0..k {
                let t = if hub[id] {
                    if rng.gen_bool(p.hub_relevant_share) {
                        pick_class(&mut rng, id, true)
                    } else {
                        rng.gen_range(0..n)
                    }
                } else if rng.gen_bool(p.locality) {
                    pick_class(&mut rng, id, relevant[id])
                } else {
                    rng.gen_range(0..n)
                };
                if t != id && !targets.contains(&t) {
                    targets.push(t);
                }
            }
            pages[id].outlinks = targets
                .into_iter()
                .map(|t| SimLink {
                    target: t,
                    anchor: text.anchor(&mut rng, relevant[t]),
                })
                .collect();
        }

        // Seeds: relevant pages on distinct sites where possible.
        let mut candidates = rel_pages.clone();
        candidates.shuffle(&mut rng);
        let mut seeds = Vec::with_capacity(p.seeds);
        let mut used_sites = Vec::new();
        for &c in &candidates {
            if seeds.len() == p.seeds {
                break;
            }
            if !used_sites.contains(&site_of(c)) {
                used_sites.push(site_of(c));
                seeds.push(c);
            }
        }
        for &c in &candidates {
            if seeds.len() == p.seeds {
                break;
            }
            if !seeds.contains(&c) {
                seeds.push(c);
            }
        }

        // Make every page reachable from the seeds.
        let mut reached = vec![false; n];
        let mut reachable = Vec::with_capacity(n);
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in &seeds {
            reached[s] = true;
            reachable.push(s);
            queue.push_back(s);
        }
        let bfs = |queue: &mut VecDeque<usize>, reached: &mut Vec<bool>, reachable: &mut Vec<usize>, pages: &[SimPage]| {
            while let Some(u) = queue.pop_front() {
                for l in &pages[u].outlinks {
                    if !reached[l.target] {
                        reached[l.target] = true;
                        reachable.push(l.target);
                        queue.push_back(l.target);
                    }
                }
            }
        };
        bfs(&mut queue, &mut reached, &mut reachable, &pages);
        for u in 0..n {
            if reached[u] {
                continue;
            }
            let from = reachable[rng.gen_range(0..reachable.len())];
            let anchor = text.anchor(&mut rng, relevant[u]);
            pages[from].outlinks.push(SimLink { target: u, anchor });
            reached[u] = true;
            reachable.push(u);
            queue.push_back(u);
            bfs(&mut queue, &mut reached, &mut reachable, &pages);
        }

        Ok(Self::assemble(params.clone(), seed, seeds, pages))
    }

    fn assemble(params: SimParams, seed: u64, seeds: Vec<usize>, pages: Vec<SimPage>) -> Self {
        let index = pages.iter().map(|pg| (pg.url.clone(), pg.id)).collect();
        Self {
            params,
            seed,
            seeds,
            pages,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn lookup(&self, url: &str) -> Option<&SimPage> {
        self.index.get(url).map(|&i| &self.pages[i])
    }

    pub fn seed_urls(&self) -> Vec<String> {
        self.seeds.iter().map(|&s| self.pages[s].url.clone()).collect()
    }

    pub fn relevant_count(&self) -> usize {
        self.pages.iter().filter(|p| p.relevant).count()
    }

    /// Relevance label by URL.
    pub fn is_relevant(&self, url: &str) -> Option<bool> {
        self.lookup(url).map(|p| p.relevant)
    }

    /// (edges from relevant pages, of which to relevant pages)
    pub fn relevant_edge_census(&self) -> (usize, usize) {
        let mut from_rel = 0;
        let mut rel_rel = 0;
        for p in self.pages.iter().filter(|p| p.relevant) {
            from_rel += p.outlinks.len();
            rel_rel += p.outlinks.iter().filter(|l| self.pages[l.target].relevant).count();
        }
        (from_rel, rel_rel)
    }

    /// Number of relevant outlinks of each page.
    pub fn relevant_outlinks(&self, id: usize) -> usize {
        self.pages[id].outlinks.iter().filter(|l| self.pages[l.target].relevant).count()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            params: self.params.clone(),
            seed: self.seed,
            seeds: self.seeds.clone(),
            pages: self.pages.len(),
        };
        let io = |e| Error::io("<sim world>", e);
        serde_json::to_writer(&mut w, &header).map_err(|e| Error::json("sim world header", e))?;
        w.write_all(b"\n").map_err(io)?;
        for p in &self.pages {
            serde_json::to_writer(&mut w, p).map_err(|e| Error::json("sim page", e))?;
            w.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    /// Hex SHA-256 of the serialized world.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_jsonl()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let ctx = |i: usize| format!("{}:{}", path.display(), i);
        let first = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{}: empty sim world file", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&first).map_err(|e| Error::json(ctx(1), e))?;
        let mut pages = Vec::with_capacity(header.pages);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let page: SimPage = serde_json::from_str(&line).map_err(|e| Error::json(ctx(i + 2), e))?;
            if page.id != pages.len() {
                return Err(Error::GraphIntegrity(format!("{}: page ids out of order", ctx(i + 2))));
            }
            pages.push(page);
        }
        if pages.len() != header.pages {
            return Err(Error::GraphIntegrity(format!(
                "{}: header declares {} pages, found {}",
                path.display(),
                header.pages,
                pages.len()
            )));
        }
        if let Some(bad) = pages.iter().flat_map(|p| &p.outlinks).find(|l| l.target >= pages.len()) {
            return Err(Error::GraphIntegrity(format!("outlink to unknown page {}", bad.target)));
        }
        Ok(Self::assemble(header.params, header.seed, header.seeds, pages))
    }

    /// A labelled corpus of up to `relevant` relevant and `irrelevant`
    /// irrelevant pages drawn without replacement.
    pub fn labeled_corpus(&self, relevant: usize, irrelevant: usize, seed: u64) -> Vec<LabeledPage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rel: Vec<&SimPage> = self.pages.iter().filter(|p| p.relevant).collect();
        let mut irr: Vec<&SimPage> = self.pages.iter().filter(|p| !p.relevant).collect();
        rel.shuffle(&mut rng);
        irr.shuffle(&mut rng);
        rel.truncate(relevant);
        irr.truncate(irrelevant);
        rel.into_iter()
            .chain(irr)
            .map(|p| LabeledPage {
                url: p.url.clone(),
                title: p.title.clone(),
                text: p.body.clone(),
                label: u8::from(p.relevant),
            })
            .collect()
    }

    pub fn page(&self, url: &str) -> Option<Page> {
        let p = self.lookup(url)?;
        Some(Page {
            url: p.url.clone(),
            final_url: p.url.clone(),
            title: p.title.clone(),
            body_text: p.body.clone(),
            outlinks: p
                .outlinks
                .iter()
                .map(|l| Outlink {
                    url: self.pages[l.target].url.clone(),
                    anchor: l.anchor.clone(),
                })
                .collect(),
            status: 200,
        })
    }
}

/// Synthetic word vectors for the world's vocabulary: topic words scatter
/// around a shared direction, background words are independent.
pub fn sim_embeddings(params: &SimParams, dimension: usize, spread: f64, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let center = unit(&mut rng);
    let mut entries = Vec::with_capacity(params.topic_vocab + params.background_vocab);
    for i in 0..params.topic_vocab {
        let noise = unit(&mut rng);
        let v = center.iter().zip(&noise).map(|(c, e)| c + spread * e).collect();
        entries.push((topic_token(i), v));
    }
    for i in 0..params.background_vocab {
        entries.push((background_token(i), unit(&mut rng)));
    }
    EmbeddingTable::from_entries(dimension, entries)
}

/// Read-only [`PageSource`] over a world.
pub struct SimSource<'a> {
    world: &'a SimWorld,
}

impl<'a> SimSource<'a> {
    pub fn new(world: &'a SimWorld) -> Self {
        Self { world }
    }
}

impl PageSource for SimSource<'_> {
    fn fetch(&mut self, url: &str) -> std::result::Result<Page, FetchError> {
        self.world
            .page(url)
            .ok_or_else(|| FetchError::NotFound { url: url.to_string() })
    }
}
