//! Page acquisition: a polite HTTP fetcher and a synthetic web simulator.

pub mod html;
pub mod live;
pub mod robots;
pub mod sim;
pub mod url;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::url::{domain_of, normalize_url};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outlink {
    pub url: String,
    pub anchor: String,
}

/// A fetched page with extracted text and deduplicated outlinks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub url: String,
    pub final_url: String,
    pub title: String,
    pub body_text: String,
    pub outlinks: Vec<Outlink>,
    pub status: u16,
}

impl Page {
    /// Drops repeated outlinks (by normalized URL), keeping the first anchor.
    /// Outlinks that fail to normalize are dropped.
    pub fn dedup_outlinks(links: impl IntoIterator<Item = Outlink>) -> Vec<Outlink> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for link in links {
            let Ok(url) = normalize_url(&link.url) else { continue };
            if seen.insert(url.clone()) {
                out.push(Outlink { url, anchor: link.anchor });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("{url}: network error: {reason}")]
    Network { url: String, reason: String },
    #[error("{url}: timed out")]
    Timeout { url: String },
    #[error("{url}: disallowed by robots.txt")]
    RobotsDenied { url: String },
    #[error("{url}: not found")]
    NotFound { url: String },
    #[error("{url}: http status {status}")]
    HttpStatus { url: String, status: u16 },
    #[error("{url}: {reason}")]
    Malformed { url: String, reason: String },
}

impl FetchError {
    /// Short stable label used in crawl logs.
    pub fn category(&self) -> &'static str {
        match self {
            FetchError::Network { .. } => "network",
            FetchError::Timeout { .. } => "timeout",
            FetchError::RobotsDenied { .. } => "robots_denied",
            FetchError::NotFound { .. } => "not_found",
            FetchError::HttpStatus { .. } => "http_status",
            FetchError::Malformed { .. } => "malformed",
        }
    }
}

/// Anything that can turn a URL into a [`Page`].
pub trait PageSource {
    fn fetch(&mut self, url: &str) -> Result<Page, FetchError>;
}
