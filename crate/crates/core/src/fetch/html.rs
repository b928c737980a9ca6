//! Lightweight HTML text and link extraction.

use std::sync::OnceLock;

use regex::Regex;
use url::Url;

use super::{Outlink, Page};

struct Patterns {
    hidden: Regex,
    comment: Regex,
    title: Regex,
    anchor: Regex,
    href: Regex,
    tag: Regex,
    space: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        hidden: Regex::new(r"(?is)<(script|style|noscript|template)\b.*?</(script|style|noscript|template)\s*>").unwrap(),
        comment: Regex::new(r"(?s)<!--.*?-->").unwrap(),
        title: Regex::new(r"(?is)<title\b[^>]*>(.*?)</title\s*>").unwrap(),
        anchor: Regex::new(r"(?is)<a\b([^>]*)>(.*?)</a\s*>").unwrap(),
        href: Regex::new(r#"(?is)\bhref\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap(),
        tag: Regex::new(r"(?s)<[^>]*>").unwrap(),
        space: Regex::new(r"\s+").unwrap(),
    })
}

/// Decodes the handful of entities common in visible text.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let Some(end) = rest[..rest.len().min(12)].find(';') else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let name = &rest[1..end];
        let decoded = match name {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ => name
                .strip_prefix("#x")
                .or_else(|| name.strip_prefix("#X"))
                .and_then(|h| u32::from_str_radix(h, 16).ok())
                .or_else(|| name.strip_prefix('#').and_then(|d| d.parse().ok()))
                .and_then(char::from_u32),
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Tags removed, entities decoded, whitespace collapsed.
pub fn visible_text(fragment: &str) -> String {
    let p = patterns();
    let no_tags = p.tag.replace_all(fragment, " ");
    let decoded = decode_entities(&no_tags);
    p.space.replace_all(decoded.trim(), " ").into_owned()
}

/// Extracts title, body text and outlinks. Relative links resolve against
/// `base`; only http and https links are kept.
pub fn extract(html: &str, base: &str, status: u16) -> Page {
    let p = patterns();
    let cleaned = p.comment.replace_all(html, " ");
    let cleaned = p.hidden.replace_all(&cleaned, " ");
    let title = p
        .title
        .captures(&cleaned)
        .map(|c| visible_text(&c[1]))
        .unwrap_or_default();
    let body_src = p.title.replace_all(&cleaned, " ");
    let body_text = visible_text(&body_src);

    let base_url = Url::parse(base).ok();
    let mut links = Vec::new();
    for cap in p.anchor.captures_iter(&cleaned) {
        let Some(h) = p.href.captures(&cap[1]) else { continue };
        let raw = h.get(1).or_else(|| h.get(2)).or_else(|| h.get(3)).map_or("", |m| m.as_str());
        let raw = decode_entities(raw.trim());
        let resolved = match &base_url {
            Some(b) => b.join(&raw),
            None => Url::parse(&raw),
        };
        let Ok(u) = resolved else { continue };
        if u.scheme() != "http" && u.scheme() != "https" {
            continue;
        }
        links.push(Outlink {
            url: u.to_string(),
            anchor: visible_text(&cap[2]),
        });
    }
    Page {
        url: base.to_string(),
        final_url: base.to_string(),
        title,
        body_text,
        outlinks: Page::dedup_outlinks(links),
        status,
    }
}
