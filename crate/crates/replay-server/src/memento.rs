//! Turning a URI-M request into a response built from the archive.

use adreplay_core::fuzzy::ResolveError;
use adreplay_core::rewrite::{rewrite_css, rewrite_html, RewriteContext};
use adreplay_core::warc::read_record_at;
use adreplay_core::{parse_urim, Modifier, Resolution, UriM};
use axum::body::Body;
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use url::Url;

use crate::body::{decode_content, dechunk};
use crate::{Collection, ServerConfig};

/// Status, headers and body of a replayed memento or of an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MementoResponse {
    pub status: u16,
    pub headers: Vec<(String, Vec<u8>)>,
    pub body: Vec<u8>,
}

impl MementoResponse {
    fn json(status: u16, value: &impl serde::Serialize) -> Self {
        Self {
            status,
            headers: vec![("Content-Type".into(), b"application/json".to_vec())],
            body: serde_json::to_vec(value).expect("serializable"),
        }
    }

    fn error(status: u16, message: impl std::fmt::Display) -> Self {
        Self::json(status, &serde_json::json!({ "error": message.to_string() }))
    }

    pub fn header(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_slice())
    }
}

impl IntoResponse for MementoResponse {
    fn into_response(self) -> Response {
        let mut response = Response::new(Body::from(self.body));
        *response.status_mut() =
            StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let headers = response.headers_mut();
        for (name, value) in self.headers {
            let (Ok(n), Ok(v)) = (
                HeaderName::from_bytes(name.as_bytes()),
                HeaderValue::from_bytes(&value),
            ) else {
                continue;
            };
            headers.append(n, v);
        }
        response
    }
}

const DROPPED: &[&str] = &[
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "content-length",
    "content-security-policy",
    "content-security-policy-report-only",
];

/// Browsers and some proxies fold `//` in paths, so `https://` may arrive
/// as `https:/`.
pub(crate) fn repair_scheme_slashes(target: &str) -> String {
    for scheme in ["https:/", "http:/"] {
        if let Some(at) = target.find(scheme) {
            let after = at + scheme.len();
            if !target[after..].starts_with('/') {
                return format!("{}/{}", &target[..after], &target[after..]);
            }
            return target.to_string();
        }
    }
    target.to_string()
}

/// URI-R of the page that referred to this request, when the referrer is
/// itself a memento of this server.
pub(crate) fn referer_urir(replay_base: &str, referer: &str) -> Option<String> {
    let path = match referer.split_once("://") {
        Some((_, rest)) => &rest[rest.find('/')?..],
        None => referer,
    };
    parse_urim(replay_base, &repair_scheme_slashes(path))
        .ok()
        .map(|u| u.urir)
}

pub(crate) fn serve(
    collection: &Collection,
    config: &ServerConfig,
    target: &str,
    referer: Option<&str>,
    range: Option<&str>,
) -> MementoResponse {
    let target = repair_scheme_slashes(target);
    let urim = match parse_urim(&config.replay_base, &target) {
        Ok(u) => u,
        Err(e) => return MementoResponse::error(400, e),
    };
    let referrer = referer.and_then(|r| referer_urir(&config.replay_base, r));
    let resolution = match collection
        .matcher
        .resolve(&urim.urir, urim.timestamp, referrer.as_deref())
    {
        Ok(r) => r,
        Err(ResolveError::NotFound(report)) => return MementoResponse::json(404, &report),
        Err(e) => return MementoResponse::error(400, e),
    };
    if config.verbose {
        eprintln!(
            "{} -> {} {} via {}",
            urim.urir, resolution.entry.original_uri, resolution.entry.timestamp, resolution.rule_used
        );
    }
    match replay(collection, config, &urim, &resolution, range) {
        Ok(r) => r,
        Err(message) => MementoResponse::error(502, message),
    }
}

fn replay(
    collection: &Collection,
    config: &ServerConfig,
    urim: &UriM,
    resolution: &Resolution,
    range: Option<&str>,
) -> Result<MementoResponse, String> {
    let entry = &resolution.entry;
    if entry.unresolved || entry.length == 0 {
        return Err(format!("revisit of {} has no original in the collection", entry.original_uri));
    }
    let source = collection
        .matcher
        .index()
        .source(entry.source_id)
        .ok_or_else(|| format!("unknown source {}", entry.source_id))?;
    let record = read_record_at(source, entry.offset, entry.length).map_err(|e| e.to_string())?;
    let http = record
        .http
        .as_ref()
        .ok_or_else(|| "record carries no HTTP message".to_string())?;
    let status = http.status().unwrap_or(entry.status);
    let mut body = record.payload.to_vec().map_err(|e| e.to_string())?;

    let chunked = http
        .get_str("transfer-encoding")
        .is_some_and(|v| v.to_ascii_lowercase().contains("chunked"));
    if chunked {
        if let Some(plain) = dechunk(&body) {
            body = plain;
        }
    }

    let mime = http
        .get_str("content-type")
        .map(|v| v.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
        .unwrap_or_else(|| entry.mime.to_ascii_lowercase());
    let kind = match (urim.modifier, mime.as_str()) {
        (Modifier::Id, _) => Kind::Raw,
        (Modifier::None | Modifier::If | Modifier::Oe, "text/html" | "application/xhtml+xml") => Kind::Html,
        (_, "text/css") => Kind::Css,
        _ => Kind::Raw,
    };

    let mut headers: Vec<(String, Vec<u8>)> = Vec::new();
    let mut coding: Option<String> = None;
    for (name, value) in &http.headers {
        let lower = name.to_ascii_lowercase();
        if DROPPED.contains(&lower.as_str()) {
            continue;
        }
        if lower == "content-encoding" && kind != Kind::Raw {
            coding = Some(String::from_utf8_lossy(value).into_owned());
            continue;
        }
        if lower == "location" && (300..400).contains(&status) {
            let rewritten = String::from_utf8(value.clone())
                .ok()
                .and_then(|loc| Url::parse(&entry.original_uri).ok()?.join(loc.trim()).ok())
                .filter(|u| matches!(u.scheme(), "http" | "https"))
                .map(|u| format!("{}{}{}/{}", config.replay_base, entry.timestamp, urim.modifier.token(), u));
            if let Some(loc) = rewritten {
                headers.push((name.clone(), loc.into_bytes()));
                continue;
            }
        }
        headers.push((name.clone(), value.clone()));
    }

    if kind != Kind::Raw {
        if let Some(c) = &coding {
            match decode_content(c, &body) {
                Some(decoded) => body = decoded,
                None => {
                    // Cannot undo the coding: pass the bytes through untouched.
                    headers.push(("Content-Encoding".into(), c.clone().into_bytes()));
                    return Ok(finish(status, headers, body, resolution));
                }
            }
        }
        let base = Url::parse(&entry.original_uri).map_err(|e| e.to_string())?;
        let mut ctx = RewriteContext::new(&config.replay_base, entry.timestamp, base);
        if !config.inject_shim {
            ctx = ctx.without_shim();
        }
        body = match kind {
            Kind::Html => rewrite_html(&body, &ctx),
            _ => rewrite_css(&body, &ctx),
        };
    }

    if urim.modifier == Modifier::Id {
        if let Some(spec) = range {
            return Ok(ranged(status, headers, body, resolution, spec));
        }
    }
    Ok(finish(status, headers, body, resolution))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Raw,
    Html,
    Css,
}

fn finish(
    status: u16,
    mut headers: Vec<(String, Vec<u8>)>,
    body: Vec<u8>,
    resolution: &Resolution,
) -> MementoResponse {
    headers.push((
        "Memento-Datetime".into(),
        resolution.entry.timestamp.to_http_date().into_bytes(),
    ));
    headers.push(("X-Archive-Rule".into(), resolution.rule_used.clone().into_bytes()));
    MementoResponse {
        status,
        headers,
        body,
    }
}

/// A single `bytes=` range. `Err(())` when it cannot be satisfied, `Ok(None)`
/// when the header is not one we honour.
pub(crate) fn parse_range(spec: &str, len: u64) -> Result<Option<(u64, u64)>, ()> {
    let Some(set) = spec.trim().strip_prefix("bytes=") else {
        return Ok(None);
    };
    if set.contains(',') {
        return Ok(None);
    }
    let Some((a, b)) = set.trim().split_once('-') else {
        return Ok(None);
    };
    let (a, b) = (a.trim(), b.trim());
    let parse = |s: &str| s.parse::<u64>().map_err(|_| ());
    if a.is_empty() {
        let n = parse(b)?;
        if n == 0 || len == 0 {
            return Err(());
        }
        return Ok(Some((len.saturating_sub(n), len - 1)));
    }
    let start = parse(a)?;
    let end = if b.is_empty() { len.saturating_sub(1) } else { parse(b)?.min(len.saturating_sub(1)) };
    if start >= len || (!b.is_empty() && parse(b)? < start) {
        return Err(());
    }
    Ok(Some((start, end)))
}

fn ranged(
    status: u16,
    mut headers: Vec<(String, Vec<u8>)>,
    body: Vec<u8>,
    resolution: &Resolution,
    spec: &str,
) -> MementoResponse {
    if status != 200 {
        return finish(status, headers, body, resolution);
    }
    let len = body.len() as u64;
    headers.push(("Accept-Ranges".into(), b"bytes".to_vec()));
    match parse_range(spec, len) {
        Ok(None) => finish(status, headers, body, resolution),
        Ok(Some((start, end))) => {
            headers.push((
                "Content-Range".into(),
                format!("bytes {start}-{end}/{len}").into_bytes(),
            ));
            let part = body[start as usize..=end as usize].to_vec();
            finish(206, headers, part, resolution)
        }
        Err(()) => {
            headers.retain(|(n, _)| !n.eq_ignore_ascii_case("content-type"));
            headers.push(("Content-Range".into(), format!("bytes */{len}").into_bytes()));
            finish(416, headers, Vec::new(), resolution)
        }
    }
}
