//! Tokenization, stopwords and line-oriented word lists.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../stopwords.txt");

/// Lowercases `raw` and strips every non-alphanumeric character.
pub fn normalize_token(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits text on anything that is not alphanumeric and lowercases the pieces.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(contents: &str) -> Self {
        Self {
            words: parse_word_list(contents).into_iter().collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The stopword list shipped with the crate.
pub fn default_stopwords() -> &'static StopWords {
    static DEFAULT: OnceLock<StopWords> = OnceLock::new();
    DEFAULT.get_or_init(|| StopWords::parse(DEFAULT_STOPWORDS))
}

/// One entry per line, `#` starts a comment, blank lines ignored. Entries are
/// normalized with [`normalize_token`]; order of first appearance is kept.
pub fn parse_word_list(contents: &str) -> Vec<String> {
    contents
        .lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(normalize_token)
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn read_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&contents))
}
