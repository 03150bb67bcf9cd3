//! Sorted capture index over archive sources.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canon::{canonicalize, canonicalize_prefix, CanonError, CanonicalUrl};
use crate::timestamp::Timestamp14;
use crate::wacz::open_wacz;
use crate::warc::{parse_warc, ArchiveSource, CaptureRecord, Locator, RecordType, SourceKind};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("no capture of {key} in the index")]
    NotFound { key: String },
    #[error(transparent)]
    Canon(#[from] CanonError),
}

#[derive(Debug, Error)]
pub enum CdxjError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One index row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdxEntry {
    pub key: CanonicalUrl,
    pub timestamp: Timestamp14,
    pub original_uri: String,
    pub status: u16,
    pub mime: String,
    pub source_id: usize,
    pub offset: u64,
    pub length: u64,
    pub digest: String,
    /// Entry came from a revisit record.
    pub revisit: bool,
    /// Revisit whose original payload could not be found; `length` is 0.
    pub unresolved: bool,
}

impl CdxEntry {
    /// Server errors and unresolved revisits are only served when nothing
    /// better exists for the same lookup.
    pub fn is_preferred(&self) -> bool {
        self.status < 500 && !self.unresolved
    }

    fn sort_key(&self) -> (&str, Timestamp14, &str, usize, u64) {
        (
            self.key.as_str(),
            self.timestamp,
            self.digest.as_str(),
            self.source_id,
            self.offset,
        )
    }
}

/// Outcome of indexing one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceReport {
    pub locator: String,
    pub records: usize,
    pub indexed: usize,
    pub error: Option<String>,
}

/// Entries sorted by (key, timestamp). The sorted vector doubles as the
/// prefix structure: a prefix scan is a binary search plus a linear walk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaptureIndex {
    entries: Vec<CdxEntry>,
    sources: Vec<ArchiveSource>,
}

/// Picks the entry closest in time to `ts`. Ties go to the earlier capture,
/// then to the lexicographically smallest original URI. Preferred entries
/// win over non-preferred ones regardless of distance.
pub fn nearest<'a, I>(candidates: I, ts: Timestamp14) -> Option<&'a CdxEntry>
where
    I: IntoIterator<Item = &'a CdxEntry>,
{
    let all: Vec<&CdxEntry> = candidates.into_iter().collect();
    let preferred = all.iter().any(|e| e.is_preferred());
    all.into_iter()
        .filter(|e| !preferred || e.is_preferred())
        .min_by(|a, b| {
            (a.timestamp.abs_diff(&ts), a.timestamp, &a.original_uri).cmp(&(
                b.timestamp.abs_diff(&ts),
                b.timestamp,
                &b.original_uri,
            ))
        })
}

impl CaptureIndex {
    /// Builds an index directly from entries and their sources.
    pub fn from_parts(mut entries: Vec<CdxEntry>, sources: Vec<ArchiveSource>) -> Self {
        entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        entries.dedup_by(|b, a| a.key == b.key && a.timestamp == b.timestamp && a.digest == b.digest);
        Self { entries, sources }
    }

    pub fn entries(&self) -> &[CdxEntry] {
        &self.entries
    }

    pub fn sources(&self) -> &[ArchiveSource] {
        &self.sources
    }

    pub fn source(&self, id: usize) -> Option<&ArchiveSource> {
        self.sources.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All captures of one key, timestamp ordered.
    pub fn entries_for_key(&self, key: &str) -> &[CdxEntry] {
        let start = self.entries.partition_point(|e| e.key.as_str() < key);
        let end = start + self.entries[start..].partition_point(|e| e.key.as_str() == key);
        &self.entries[start..end]
    }

    /// Entries whose key starts with `prefix` (already canonical).
    pub fn entries_with_key_prefix(&self, prefix: &str) -> &[CdxEntry] {
        let start = self.entries.partition_point(|e| e.key.as_str() < prefix);
        let len = self.entries[start..].partition_point(|e| e.key.as_str().starts_with(prefix));
        &self.entries[start..start + len]
    }

    pub fn lookup(&self, url: &str, ts: Timestamp14) -> Result<&CdxEntry, IndexError> {
        let key = canonicalize(url)?;
        self.lookup_key(key.as_str(), ts)
    }

    pub fn lookup_key(&self, key: &str, ts: Timestamp14) -> Result<&CdxEntry, IndexError> {
        nearest(self.entries_for_key(key), ts).ok_or_else(|| IndexError::NotFound {
            key: key.to_string(),
        })
    }

    /// Entries under a URL prefix, optionally restricted to one MIME type.
    pub fn prefix_search(
        &self,
        prefix: &str,
        mime: Option<&str>,
    ) -> Result<Vec<&CdxEntry>, CanonError> {
        let key = canonicalize_prefix(prefix)?;
        let mime = mime.map(|m| m.trim().to_ascii_lowercase());
        Ok(self
            .entries_with_key_prefix(key.as_str())
            .iter()
            .filter(|e| mime.as_deref().is_none_or(|m| e.mime == m))
            .collect())
    }

    /// Up to `n` distinct keys sorting closest to `key`.
    pub fn neighbor_keys(&self, key: &str, n: usize) -> Vec<String> {
        let pos = self.entries.partition_point(|e| e.key.as_str() < key);
        let mut after: Vec<&str> = Vec::new();
        for e in &self.entries[pos..] {
            if after.len() == n {
                break;
            }
            if after.last() != Some(&e.key.as_str()) {
                after.push(e.key.as_str());
            }
        }
        let mut before: Vec<&str> = Vec::new();
        for e in self.entries[..pos].iter().rev() {
            if before.len() == n {
                break;
            }
            if before.last() != Some(&e.key.as_str()) {
                before.push(e.key.as_str());
            }
        }
        let mut out = Vec::with_capacity(n);
        let (mut a, mut b) = (after.into_iter(), before.into_iter());
        while out.len() < n {
            match (a.next(), b.next()) {
                (None, None) => break,
                (x, y) => {
                    for k in [x, y].into_iter().flatten() {
                        if out.len() < n {
                            out.push(k.to_string());
                        }
                    }
                }
            }
        }
        out
    }

    /// Writes the index as CDXJ: `!source` lines describing the sources,
    /// then one `key timestamp {json}` line per entry.
    pub fn write_cdxj<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (id, source) in self.sources.iter().enumerate() {
            let line = SourceLine {
                id,
                kind: source.kind,
                filename: source.locator.to_string(),
            };
            writeln!(out, "!source {}", serde_json::to_string(&line).map_err(io::Error::other)?)?;
        }
        for e in &self.entries {
            let body = EntryJson {
                url: &e.original_uri,
                status: e.status,
                mime: &e.mime,
                digest: &e.digest,
                offset: e.offset,
                length: e.length,
                source: e.source_id,
                revisit: e.revisit,
                unresolved: e.unresolved,
            };
            writeln!(
                out,
                "{} {} {}",
                e.key,
                e.timestamp,
                serde_json::to_string(&body).map_err(io::Error::other)?
            )?;
        }
        Ok(())
    }

    pub fn to_cdxj(&self) -> String {
        let mut buf = Vec::new();
        self.write_cdxj(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CDXJ is UTF-8")
    }

    pub fn read_cdxj<R: BufRead>(input: R) -> Result<Self, CdxjError> {
        let mut sources: BTreeMap<usize, ArchiveSource> = BTreeMap::new();
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let bad = |reason: String| CdxjError::Malformed { line: lineno, reason };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("!source ") {
                let s: SourceLine = serde_json::from_str(rest).map_err(|e| bad(e.to_string()))?;
                sources.insert(s.id, ArchiveSource::with_kind(s.kind, Locator::parse(&s.filename)));
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let (Some(key), Some(ts), Some(json)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected `key timestamp {json}`".into()));
            };
            let timestamp = Timestamp14::parse(ts).map_err(|e| bad(e.to_string()))?;
            let body: EntryOwned = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
            if !sources.contains_key(&body.source) {
                return Err(bad(format!("unknown source {}", body.source)));
            }
            entries.push(CdxEntry {
                key: CanonicalUrl::from_key(key),
                timestamp,
                original_uri: body.url,
                status: body.status,
                mime: body.mime,
                source_id: body.source,
                offset: body.offset,
                length: body.length,
                digest: body.digest,
                revisit: body.revisit,
                unresolved: body.unresolved,
            });
        }
        let expected: Vec<usize> = (0..sources.len()).collect();
        if sources.keys().copied().collect::<Vec<_>>() != expected {
            return Err(CdxjError::Malformed {
                line: 0,
                reason: "source ids are not contiguous from 0".into(),
            });
        }
        Ok(Self::from_parts(entries, sources.into_values().collect()))
    }
}

#[derive(Serialize, Deserialize)]
struct SourceLine {
    id: usize,
    kind: SourceKind,
    filename: String,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize)]
struct EntryJson<'a> {
    url: &'a str,
    status: u16,
    mime: &'a str,
    digest: &'a str,
    offset: u64,
    length: u64,
    source: usize,
    #[serde(skip_serializing_if = "is_false")]
    revisit: bool,
    #[serde(skip_serializing_if = "is_false")]
    unresolved: bool,
}

#[derive(Deserialize)]
struct EntryOwned {
    url: String,
    status: u16,
    mime: String,
    digest: String,
    offset: u64,
    length: u64,
    source: usize,
    #[serde(default)]
    revisit: bool,
    #[serde(default)]
    unresolved: bool,
}

/// Payload digest as recorded in the WARC, or a SHA-256 of the payload.
pub fn record_digest(record: &CaptureRecord) -> io::Result<String> {
    if let Some(d) = record.payload_digest() {
        return Ok(d.to_string());
    }
    let mut hasher = Sha256::new();
    io::copy(&mut record.payload.reader()?, &mut hasher)?;
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

struct PendingRevisit {
    entry: CdxEntry,
}

/// Expands WACZ containers into their WARC members; other sources pass
/// through. Containers that fail to open are reported and dropped.
fn expand(sources: Vec<ArchiveSource>, reports: &mut Vec<SourceReport>) -> Vec<ArchiveSource> {
    let mut out = Vec::new();
    for source in sources {
        match (&source.kind, &source.locator) {
            (SourceKind::Wacz, Locator::File(path)) => match open_wacz(path) {
                Ok(members) => out.extend(members),
                Err(e) => reports.push(SourceReport {
                    locator: source.locator.to_string(),
                    records: 0,
                    indexed: 0,
                    error: Some(e.to_string()),
                }),
            },
            _ => out.push(source),
        }
    }
    out
}

/// Indexes every HTTP response (and revisit) in `sources`. Sources are
/// ordered by locator first, so the result does not depend on input order.
/// A source that fails part-way keeps the entries read before the failure.
pub fn build_index(sources: Vec<ArchiveSource>) -> (CaptureIndex, Vec<SourceReport>) {
    let mut reports = Vec::new();
    let mut sources = expand(sources, &mut reports);
    sources.sort_by(|a, b| a.locator.cmp(&b.locator));
    sources.dedup_by(|b, a| a.locator == b.locator);

    let mut entries = Vec::new();
    let mut revisits = Vec::new();
    for (source_id, source) in sources.iter_mut().enumerate() {
        let mut report = SourceReport {
            locator: source.locator.to_string(),
            records: 0,
            indexed: 0,
            error: None,
        };
        let mut offsets = Vec::new();
        match parse_warc(source) {
            Err(e) => report.error = Some(e.to_string()),
            Ok(iter) => {
                for item in iter {
                    let parsed = match item {
                        Ok(p) => p,
                        Err(e) => {
                            report.error = Some(e.to_string());
                            break;
                        }
                    };
                    report.records += 1;
                    offsets.push((parsed.offset, parsed.length));
                    let rec = &parsed.record;
                    let Some(entry) = entry_for(rec, source_id, parsed.offset, parsed.length) else {
                        continue;
                    };
                    report.indexed += 1;
                    if rec.record_type == RecordType::Revisit {
                        revisits.push(PendingRevisit { entry });
                    } else {
                        entries.push(entry);
                    }
                }
            }
        }
        source.member_offsets = offsets;
        reports.push(report);
    }

    let mut by_digest: HashMap<&str, &CdxEntry> = HashMap::new();
    let mut sorted: Vec<&CdxEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    for e in sorted {
        by_digest.entry(e.digest.as_str()).or_insert(e);
    }
    let resolved: Vec<CdxEntry> = revisits
        .into_iter()
        .map(|PendingRevisit { mut entry }| {
            match by_digest.get(entry.digest.as_str()) {
                Some(original) => {
                    entry.source_id = original.source_id;
                    entry.offset = original.offset;
                    entry.length = original.length;
                    if entry.mime == "-" {
                        entry.mime = original.mime.clone();
                    }
                }
                None => {
                    entry.unresolved = true;
                    entry.length = 0;
                }
            }
            entry
        })
        .collect();
    entries.extend(resolved);

    (CaptureIndex::from_parts(entries, sources), reports)
}

fn entry_for(rec: &CaptureRecord, source_id: usize, offset: u64, length: u64) -> Option<CdxEntry> {
    if !matches!(rec.record_type, RecordType::Response | RecordType::Revisit) {
        return None;
    }
    let target = rec.target_uri.as_deref()?;
    let key = canonicalize(target).ok()?;
    let status = rec.http_status()?;
    let digest = if rec.record_type == RecordType::Revisit {
        rec.payload_digest().unwrap_or("-").to_string()
    } else {
        record_digest(rec).ok()?
    };
    Some(CdxEntry {
        key,
        timestamp: Timestamp14::from_datetime(rec.warc_date),
        original_uri: target.to_string(),
        status,
        mime: rec.mime().unwrap_or_else(|| "-".to_string()),
        source_id,
        offset,
        length,
        digest,
        revisit: rec.record_type == RecordType::Revisit,
        unresolved: false,
    })
}
