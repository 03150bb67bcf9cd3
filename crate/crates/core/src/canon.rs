//! URL canonicalization for index keys.
//!
//! Keys are plain URLs without a scheme: lowercased host with one leading
//! `www.` removed, default port dropped, fragment dropped, percent-escapes
//! of unreserved characters decoded (others upper-cased), query parameters
//! sorted by name then value, and an empty query removed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("not an absolute http(s) URL: {0:?}")]
    NotAbsoluteUrl(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalUrl(String);

impl CanonicalUrl {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Wraps text already known to be a key, e.g. read back from a CDXJ file.
    pub fn from_key(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Host part of the key (including any port).
    pub fn host(&self) -> &str {
        self.0.split('/').next().unwrap_or("")
    }

    /// Key with the query removed.
    pub fn without_query(&self) -> &str {
        self.0.split('?').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for CanonicalUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CanonicalUrl {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub(crate) fn parse_http_url(url: &str) -> Result<Url, CanonError> {
    let parsed = Url::parse(url.trim()).map_err(|_| CanonError::NotAbsoluteUrl(url.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
        return Err(CanonError::NotAbsoluteUrl(url.to_string()));
    }
    Ok(parsed)
}

pub fn canonicalize(url: &str) -> Result<CanonicalUrl, CanonError> {
    let parsed = parse_http_url(url)?;
    Ok(CanonicalUrl(canonical_key(&parsed)))
}

pub(crate) fn canonical_host(parsed: &Url) -> String {
    let host = parsed.host_str().unwrap_or("").to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
    // Keys carry no scheme, so a port that is the default for either
    // scheme is dropped; otherwise re-canonicalizing a key could change it.
    match parsed.port() {
        Some(port) if port != 80 && port != 443 => format!("{host}:{port}"),
        _ => host,
    }
}

pub(crate) fn canonical_key(parsed: &Url) -> String {
    let mut key = canonical_host(parsed);
    key.push_str(&normalize_escapes(parsed.path()));
    if let Some(query) = parsed.query() {
        let query = sort_query(query);
        if !query.is_empty() {
            key.push('?');
            key.push_str(&query);
        }
    }
    key
}

/// Canonicalizes a URL prefix for range scans. Unlike [`canonicalize`], a
/// prefix without a path keeps no trailing slash, so `https://cdn.test`
/// also matches `cdn.test.example/`-style hosts that share the prefix text.
pub fn canonicalize_prefix(prefix: &str) -> Result<CanonicalUrl, CanonError> {
    let parsed = parse_http_url(prefix)?;
    let mut key = canonical_key(&parsed);
    let after_scheme = prefix.trim().split_once("://").map(|(_, r)| r).unwrap_or("");
    if !after_scheme.contains(['/', '?', '#']) && key.ends_with('/') {
        key.pop();
    }
    Ok(CanonicalUrl(key))
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Decodes `%XX` escapes of unreserved characters and upper-cases the hex
/// digits of every other escape. Malformed escapes are left alone.
pub(crate) fn normalize_escapes(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let (Some(hi), Some(lo)) = (hex_val(bytes[i + 1]), hex_val(bytes[i + 2])) {
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
        // the input is valid UTF-8 and we only split at ASCII bytes
        let ch = text[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Splits a raw query into normalized `(name, value)` pairs; `value` is
/// `None` for parameters without `=`. Empty pieces are dropped.
pub(crate) fn query_pairs(query: &str) -> Vec<(String, Option<String>)> {
    query
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (normalize_escapes(k), Some(normalize_escapes(v))),
            None => (normalize_escapes(p), None),
        })
        .collect()
}

pub(crate) fn join_query(pairs: &[(String, Option<String>)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| match v {
            Some(v) => format!("{k}={v}"),
            None => k.clone(),
        })
        .collect::<Vec<_>>()
        .join("&")
}

fn sort_query(query: &str) -> String {
    let mut pairs = query_pairs(query);
    pairs.sort();
    join_query(&pairs)
}
