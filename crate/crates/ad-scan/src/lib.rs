//! Finding ads inside an archive: per-service counts, blocklist verdicts
//! and a static gallery of candidate ad captures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adreplay_core::ads::{classify_resource, classify_with_payload, spn_block_check, AdResource, AdType, BlockVerdict, Service};
use adreplay_core::index::SourceReport;
use adreplay_core::warc::{read_record_at, WarcError};
use adreplay_core::{build_index, canonicalize, make_urim, ArchiveSource, CaptureIndex, CdxEntry, Modifier};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("{0}")]
    Archive(#[from] WarcError),
    #[error("{locator}: {message}")]
    Source { locator: String, message: String },
    #[error("seed URL {0:?} is not an absolute http(s) URL")]
    BadSeed(String),
    #[error("replay base must be non-empty and end with '/': {0:?}")]
    BadReplayBase(String),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),
}

/// Opens and indexes one archive. A source that fails to parse fails the
/// whole scan.
pub fn open_index(path: &Path) -> Result<CaptureIndex, ScanError> {
    let source = ArchiveSource::from_path(path)?;
    let (index, reports) = build_index(vec![source]);
    if let Some(SourceReport { locator, error: Some(message), .. }) = reports.into_iter().find(|r| r.error.is_some()) {
        return Err(ScanError::Source { locator, message });
    }
    Ok(index)
}

/// Classification with image payloads consulted for their dimensions.
pub fn classify(index: &CaptureIndex, entry: &CdxEntry) -> AdResource {
    if AdType::from_mime(&entry.mime) != AdType::Image || entry.length == 0 {
        return classify_resource(entry);
    }
    let payload = index
        .source(entry.source_id)
        .and_then(|s| read_record_at(s, entry.offset, entry.length).ok())
        .and_then(|r| r.payload.to_vec().ok());
    classify_with_payload(entry, payload.as_deref())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub archive: String,
    pub captures: usize,
    pub invisible: usize,
    pub services: BTreeMap<Service, usize>,
    pub ad_types: BTreeMap<AdType, usize>,
    /// One verdict per distinct captured URL.
    pub verdicts: Vec<BlockVerdict>,
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScanError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "archive: {}", self.archive);
        let _ = writeln!(out, "captures: {} ({} invisible)", self.captures, self.invisible);
        let _ = writeln!(out, "services:");
        for (s, n) in &self.services {
            let _ = writeln!(out, "  {:<18} {n}", s.as_str());
        }
        let _ = writeln!(out, "ad types:");
        for (t, n) in &self.ad_types {
            let _ = writeln!(out, "  {:<18} {n}", t.as_str());
        }
        let blocked = self.verdicts.iter().filter(|v| v.blocked).count();
        let _ = writeln!(out, "blocklist: {blocked} of {} URLs would be refused", self.verdicts.len());
        for v in self.verdicts.iter().filter(|v| v.blocked) {
            let _ = writeln!(out, "  {} {} {}", v.reason.as_str(), v.matched_token, v.url);
        }
        out
    }
}

pub fn scan_report(path: &Path) -> Result<ScanReport, ScanError> {
    let index = open_index(path)?;
    let mut services: BTreeMap<Service, usize> = Service::ALL.iter().map(|s| (*s, 0)).collect();
    let mut ad_types: BTreeMap<AdType, usize> = AdType::ALL.iter().map(|t| (*t, 0)).collect();
    let mut invisible = 0;
    let mut urls: BTreeMap<&str, ()> = BTreeMap::new();
    for entry in index.entries() {
        let r = classify(&index, entry);
        *services.entry(r.service).or_default() += 1;
        *ad_types.entry(r.ad_type).or_default() += 1;
        if !r.visible {
            invisible += 1;
        }
        urls.insert(&entry.original_uri, ());
    }
    let verdicts = urls.keys().filter_map(|u| spn_block_check(u).ok()).collect();
    Ok(ScanReport {
        archive: path.display().to_string(),
        captures: index.len(),
        invisible,
        services,
        ad_types,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryItem {
    pub urir: String,
    pub timestamp14: String,
    pub mime: String,
    pub service: Service,
    /// Raw-mode URI-M on the replay server.
    pub urim: String,
    /// Page for this item, relative to the gallery directory.
    pub page: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub seed_url: String,
    pub seed_key: String,
    pub replay_base: String,
    pub groups: BTreeMap<AdType, Vec<GalleryItem>>,
}

impl GalleryManifest {
    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn items(&self) -> impl Iterator<Item = &GalleryItem> {
        self.groups.values().flatten()
    }
}

pub const DEFAULT_REPLAY_BASE: &str = "http://localhost:8080/web/";

/// Candidate ad captures: HTML, image and video responses other than the
/// seed page, without invisible assets.
pub fn gallery_manifest(index: &CaptureIndex, seed_url: &str, replay_base: &str) -> Result<GalleryManifest, ScanError> {
    let seed_key = canonicalize(seed_url).map_err(|_| ScanError::BadSeed(seed_url.to_string()))?;
    if replay_base.is_empty() || !replay_base.ends_with('/') {
        return Err(ScanError::BadReplayBase(replay_base.to_string()));
    }
    let mut groups: BTreeMap<AdType, Vec<GalleryItem>> = BTreeMap::new();
    let mut n = 0;
    for entry in index.entries() {
        if entry.key == seed_key || !(200..300).contains(&entry.status) {
            continue;
        }
        let r = classify(index, entry);
        if r.ad_type == AdType::Other || !r.visible {
            continue;
        }
        let Ok(urim) = make_urim(replay_base, &entry.original_uri, &entry.timestamp.to_string(), Modifier::Id) else {
            continue;
        };
        n += 1;
        groups.entry(r.ad_type).or_default().push(GalleryItem {
            urir: entry.original_uri.clone(),
            timestamp14: entry.timestamp.to_string(),
            mime: entry.mime.clone(),
            service: r.service,
            urim,
            page: format!("items/{n:04}.html"),
        });
    }
    Ok(GalleryManifest {
        seed_url: seed_url.to_string(),
        seed_key: seed_key.into_string(),
        replay_base: replay_base.to_string(),
        groups,
    })
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn item_page(ad_type: AdType, item: &GalleryItem) -> String {
    let src = escape(&item.urim);
    let embed = match ad_type {
        AdType::Image => format!(r#"<img src="{src}" alt="">"#),
        AdType::Video => format!(r#"<video src="{src}" controls></video>"#),
        _ => format!(r#"<iframe src="{src}" width="970" height="600"></iframe>"#),
    };
    format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title></head><body>\n\
         <p><a href=\"../index.html\">all candidates</a></p>\n\
         <h1>{title}</h1>\n<p>{ts} {mime} {service}</p>\n{embed}\n</body></html>\n",
        title = escape(&item.urir),
        ts = escape(&item.timestamp14),
        mime = escape(&item.mime),
        service = item.service.as_str(),
    )
}

fn index_page(m: &GalleryManifest) -> String {
    let mut out = format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Ads in {seed}</title></head><body>\n<h1>Ads in {seed}</h1>\n",
        seed = escape(&m.seed_url)
    );
    if m.is_empty() {
        out.push_str("<p>No candidate ad resources.</p>\n");
    }
    for (ad_type, items) in &m.groups {
        let _ = writeln!(out, "<h2>{} ({})</h2>\n<ul>", ad_type.as_str(), items.len());
        for item in items {
            let _ = writeln!(
                out,
                "<li><a href=\"{page}\">{urir}</a> {ts} <a href=\"{urim}\">raw</a></li>",
                page = escape(&item.page),
                urir = escape(&item.urir),
                ts = escape(&item.timestamp14),
                urim = escape(&item.urim),
            );
        }
        out.push_str("</ul>\n");
    }
    out.push_str("</body></html>\n");
    out
}

/// Writes `manifest.json`, `index.html` and `items/NNNN.html` under `out_dir`.
pub fn emit_gallery(warc: &Path, seed_url: &str, out_dir: &Path, replay_base: &str) -> Result<GalleryManifest, ScanError> {
    let index = open_index(warc)?;
    let manifest = gallery_manifest(&index, seed_url, replay_base)?;
    let write = |path: PathBuf, text: String| {
        std::fs::write(&path, text).map_err(|source| ScanError::Write { path, source })
    };
    let items_dir = out_dir.join("items");
    std::fs::create_dir_all(&items_dir).map_err(|source| ScanError::Write {
        path: items_dir.clone(),
        source,
    })?;
    for (ad_type, items) in &manifest.groups {
        for item in items {
            write(out_dir.join(&item.page), item_page(*ad_type, item))?;
        }
    }
    write(out_dir.join("index.html"), index_page(&manifest))?;
    write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// One line per URL: verdict, reason, matched token, URL.
pub fn format_verdict(v: &BlockVerdict) -> String {
    let token = if v.matched_token.is_empty() { "-" } else { &v.matched_token };
    format!(
        "{}\t{}\t{}\t{}",
        if v.blocked { "blocked" } else { "allowed" },
        v.reason.as_str(),
        token,
        v.url
    )
}
