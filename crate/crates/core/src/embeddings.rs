//! Word vectors, cosine similarity and keyword expansion.
//!
//! Expansion starts from a small set of seed keywords `KS`. The admission
//! threshold `b` is the mean cosine over all ordered pairs of distinct seed
//! keywords; a corpus word is admitted when its mean cosine to the seed
//! keywords is at least `b`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::text::{normalize_token, parse_word_list, StopWords};

const DISCOVERED_MARKER: &str = "# discovered";

/// Token-keyed word vectors, all of one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from in-memory entries. Tokens are lowercased; the first
    /// occurrence of a duplicate wins.
    pub fn from_entries<I, S>(dimension: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        if dimension == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        let mut map = HashMap::new();
        for (token, vector) in entries {
            if vector.len() != dimension {
                return Err(Error::DimensionMismatch(dimension, vector.len()));
            }
            map.entry(token.as_ref().to_lowercase()).or_insert(vector);
        }
        if map.is_empty() {
            return Err(Error::InvalidParameter("embedding table has no entries".into()));
        }
        Ok(Self {
            dimension,
            entries: map,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, &path.display().to_string())
    }

    /// Parses the textual word-vector format: a `<count> <dimension>` header
    /// followed by one `token v1 .. vd` line per word.
    pub fn parse<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let header = loop {
            match lines.next() {
                None => {
                    return Err(Error::EmptyEmbeddings {
                        path: source.to_string(),
                    })
                }
                Some((idx, line)) => {
                    let line = line.map_err(|e| Error::io(source, e))?;
                    if !line.trim().is_empty() {
                        break (idx + 1, line);
                    }
                }
            }
        };
        let (header_line, header) = header;
        let malformed = |reason: &str| Error::MalformedHeader {
            path: source.to_string(),
            line: header_line,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(malformed("expected \"<vocab_count> <dimension>\""));
        }
        let declared: usize = fields[0]
            .parse()
            .map_err(|_| malformed("vocabulary count is not an integer"))?;
        let dimension: usize = fields[1]
            .parse()
            .map_err(|_| malformed("dimension is not an integer"))?;
        if dimension == 0 {
            return Err(malformed("dimension must be positive"));
        }

        let mut entries: HashMap<String, Vec<f64>> = HashMap::with_capacity(declared);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let mut vector = Vec::with_capacity(dimension);
            for value in parts {
                let v: f64 = value.parse().map_err(|_| Error::InvalidNumber {
                    path: source.to_string(),
                    line: line_no,
                    value: value.to_string(),
                })?;
                vector.push(v);
            }
            if vector.len() != dimension {
                return Err(Error::InconsistentLength {
                    path: source.to_string(),
                    line: line_no,
                    expected: dimension,
                    found: vector.len(),
                });
            }
            entries.entry(token.to_lowercase()).or_insert(vector);
        }
        if entries.is_empty() {
            return Err(Error::EmptyEmbeddings {
                path: source.to_string(),
            });
        }
        if entries.len() != declared {
            log::warn!(
                "{source}: header declares {declared} tokens, read {} distinct",
                entries.len()
            );
        }
        Ok(Self { dimension, entries })
    }

    /// Writes the table in the textual format, tokens sorted.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.entries.len(), self.dimension);
        let sorted: BTreeMap<_, _> = self.entries.iter().collect();
        for (token, vector) in sorted {
            out.push_str(token);
            for v in vector {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }
}

/// Cosine similarity of two equal-length, non-zero vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Seed keywords plus the ones discovered by expansion. The two parts are
/// disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KeywordSet {
    initial: BTreeSet<String>,
    discovered: BTreeSet<String>,
}

impl KeywordSet {
    /// Builds a set of initial keywords; repeated keywords are rejected.
    pub fn new<I, S>(initial: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for k in initial {
            let k = normalize_token(k.as_ref());
            if k.is_empty() {
                continue;
            }
            if !set.insert(k.clone()) {
                return Err(Error::DuplicateKeyword(k));
            }
        }
        Ok(Self {
            initial: set,
            discovered: BTreeSet::new(),
        })
    }

    /// Builds an already-expanded set. Discovered keywords that repeat an
    /// initial one are dropped.
    pub fn with_discovered<I, S>(initial: Self, discovered: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = initial;
        for k in discovered {
            let k = normalize_token(k.as_ref());
            if !k.is_empty() && !set.initial.contains(&k) {
                set.discovered.insert(k);
            }
        }
        set
    }

    pub fn initial(&self) -> &BTreeSet<String> {
        &self.initial
    }

    pub fn discovered(&self) -> &BTreeSet<String> {
        &self.discovered
    }

    pub fn contains(&self, token: &str) -> bool {
        self.initial.contains(token) || self.discovered.contains(token)
    }

    /// Combined view `KS ∪ K'`, sorted.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        let mut all: Vec<&str> = self
            .initial
            .iter()
            .chain(self.discovered.iter())
            .map(String::as_str)
            .collect();
        all.sort_unstable();
        all.into_iter()
    }

    pub fn len(&self) -> usize {
        self.initial.len() + self.discovered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses a keyword file. Entries after a `# discovered` line are
    /// discovered keywords, everything before is initial.
    pub fn parse_file(contents: &str) -> Result<Self> {
        let (initial, discovered) = match contents
            .lines()
            .position(|l| l.trim().eq_ignore_ascii_case(DISCOVERED_MARKER))
        {
            Some(i) => {
                let lines: Vec<&str> = contents.lines().collect();
                (lines[..i].join("\n"), lines[i + 1..].join("\n"))
            }
            None => (contents.to_string(), String::new()),
        };
        let set = Self::new(parse_word_list(&initial))?;
        Ok(Self::with_discovered(set, parse_word_list(&discovered)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_file(&contents)
    }

    /// Inverse of [`KeywordSet::parse_file`].
    pub fn to_file_text(&self) -> String {
        let mut out = String::from("# initial\n");
        for k in &self.initial {
            out.push_str(k);
            out.push('\n');
        }
        if !self.discovered.is_empty() {
            out.push_str(DISCOVERED_MARKER);
            out.push('\n');
            for k in &self.discovered {
                out.push_str(k);
                out.push('\n');
            }
        }
        out
    }

    /// True when any keyword occurs as a substring of `haystack` (already lowercased).
    pub fn any_substring_of(&self, haystack: &str) -> bool {
        self.initial
            .iter()
            .chain(self.discovered.iter())
            .any(|k| haystack.contains(k.as_str()))
    }
}

fn initial_vectors<'a>(ks: &'a KeywordSet, table: &'a EmbeddingTable) -> Result<Vec<&'a [f64]>> {
    if ks.initial.len() < 2 {
        return Err(Error::InsufficientKeywords(ks.initial.len()));
    }
    let missing: Vec<String> = ks
        .initial
        .iter()
        .filter(|k| !table.contains(k))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    Ok(ks
        .initial
        .iter()
        .map(|k| table.get(k).expect("checked above"))
        .collect())
}

/// Admission threshold: mean cosine over ordered pairs of distinct initial keywords.
pub fn threshold_b(ks: &KeywordSet, table: &EmbeddingTable) -> Result<f64> {
    let vectors = initial_vectors(ks, table)?;
    let n = vectors.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += cosine(vectors[i], vectors[j])?;
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateScore {
    pub token: String,
    pub mean_cosine: f64,
    pub admitted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Expansion {
    pub keywords: KeywordSet,
    pub threshold: f64,
    /// Every scored candidate, sorted by token.
    pub scores: Vec<CandidateScore>,
}

impl Expansion {
    pub fn admitted(&self) -> impl Iterator<Item = &CandidateScore> {
        self.scores.iter().filter(|s| s.admitted)
    }
}

/// Expands `ks` with every distinct corpus word whose mean cosine to the
/// initial keywords reaches the threshold. Stopwords, initial keywords and
/// words without an embedding are not candidates.
pub fn expand_keywords(
    ks: &KeywordSet,
    corpus: &[Vec<String>],
    table: &EmbeddingTable,
    stopwords: &StopWords,
) -> Result<Expansion> {
    let threshold = threshold_b(ks, table)?;
    if corpus.iter().all(|doc| doc.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let seeds = initial_vectors(ks, table)?;

    let candidates: BTreeSet<String> = corpus
        .iter()
        .flatten()
        .map(|w| normalize_token(w))
        .filter(|w| !w.is_empty() && !stopwords.contains(w) && !ks.initial.contains(w))
        .filter(|w| table.contains(w))
        .collect();

    let mut scores = Vec::with_capacity(candidates.len());
    for token in candidates {
        let v = table.get(&token).expect("filtered on presence");
        let mut sum = 0.0;
        let mut scorable = true;
        for k in &seeds {
            match cosine(v, k) {
                Ok(c) => sum += c,
                Err(Error::UndefinedSimilarity) => {
                    scorable = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if !scorable {
            continue;
        }
        let mean_cosine = sum / seeds.len() as f64;
        scores.push(CandidateScore {
            admitted: mean_cosine >= threshold,
            token,
            mean_cosine,
        });
    }

    let keywords = KeywordSet::with_discovered(
        ks.clone(),
        scores.iter().filter(|s| s.admitted).map(|s| s.token.as_str()),
    );
    Ok(Expansion {
        keywords,
        threshold,
        scores,
    })
}
