//! URL canonicalization and domain extraction.

use url::Url;

use crate::error::{Error, Result};

/// Canonical form used for closure membership: lowercase scheme and host,
/// no default port, no fragment, no trailing slash on non-root paths,
/// percent-escapes of unreserved characters decoded and the rest uppercased.
pub fn normalize_url(raw: &str) -> Result<String> {
    let mut url = Url::parse(raw.trim()).map_err(|_| Error::MalformedUrl(raw.to_string()))?;
    if url.cannot_be_a_base() || url.host_str().is_none() {
        return Err(Error::MalformedUrl(raw.to_string()));
    }
    url.set_fragment(None);

    let mut path = normalize_escapes(url.path());
    while path.len() > 1 && path.ends_with('/') {
        path.pop();
    }
    url.set_path(&path);

    match url.query() {
        Some("") => url.set_query(None),
        Some(q) => {
            let q = normalize_escapes(q);
            url.set_query(Some(&q));
        }
        None => {}
    }
    Ok(url.into())
}

/// Host of `url`, lowercased, without port. Subdomains are distinct domains.
pub fn domain_of(url: &str) -> Result<String> {
    let parsed = Url::parse(url).map_err(|_| Error::MalformedUrl(url.to_string()))?;
    parsed
        .host_str()
        .map(str::to_ascii_lowercase)
        .ok_or_else(|| Error::MalformedUrl(url.to_string()))
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn hex_value(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn normalize_escapes(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let (Some(hi), Some(lo)) = (hex_value(bytes[i + 1]), hex_value(bytes[i + 2])) {
                let decoded = hi * 16 + lo;
                if is_unreserved(decoded) {
                    out.push(decoded as char);
                } else {
                    out.push('%');
                    out.push(bytes[i + 1].to_ascii_uppercase() as char);
                    out.push(bytes[i + 2].to_ascii_uppercase() as char);
                }
                i += 3;
                continue;
            }
        }
        // Input comes from a parsed Url, so it is ASCII.
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}
