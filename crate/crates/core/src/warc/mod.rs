//! WARC reading and writing.
//!
//! Plain files and per-record gzip members are both supported. Every record
//! yielded by [`parse_warc`] comes with the byte range it occupies, so the
//! index can later re-read it with [`read_record_at`].

mod reader;
mod record;
mod writer;

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reader::{ParseOptions, ParsedRecord, RecordReader, DEFAULT_SPILL_THRESHOLD};
pub use record::{CaptureRecord, HttpHead, Payload, RecordType, StartLine};
pub use writer::{write_warc, write_warc_bytes, WarcWriter};

#[derive(Debug, Error)]
pub enum WarcError {
    #[error("truncated record at offset {offset}: declared {expected} block bytes, read {got}")]
    TruncatedRecord { offset: u64, expected: u64, got: u64 },
    #[error("bad version line at offset {offset}: {line:?}")]
    BadVersionLine { offset: u64, line: String },
    #[error("bad gzip member at offset {offset}: {source}")]
    BadGzipMember { offset: u64, source: io::Error },
    #[error("malformed record header at offset {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },
    #[error("gzip member at offset {offset} holds more than one record")]
    MultiRecordMember { offset: u64 },
    #[error("record is missing {0}")]
    MissingField(&'static str),
    #[error("{0} is a container, not a WARC stream")]
    NotAWarc(String),
    #[error("not a zip container: {0}")]
    NotAZip(String),
    #[error("no WARC members under the archive directory of {0}")]
    NoArchiveMembers(PathBuf),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    WarcPlain,
    WarcGzip,
    Wacz,
}

/// Where a source's bytes live.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locator {
    File(PathBuf),
    /// A WARC stored inside a ZIP container.
    ZipMember { container: PathBuf, member: String },
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::File(path) => write!(f, "{}", path.display()),
            Locator::ZipMember { container, member } => {
                write!(f, "{}#{}", container.display(), member)
            }
        }
    }
}

impl Locator {
    /// Inverse of `Display`. A `#` separates a container from its member.
    pub fn parse(text: &str) -> Self {
        match text.rsplit_once('#') {
            Some((container, member)) if !member.is_empty() && !container.is_empty() => {
                Locator::ZipMember {
                    container: PathBuf::from(container),
                    member: member.to_string(),
                }
            }
            _ => Locator::File(PathBuf::from(text)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveSource {
    pub kind: SourceKind,
    pub locator: Locator,
    /// (offset, length) of every record, in file order. Empty until parsed.
    pub member_offsets: Vec<(u64, u64)>,
}

impl ArchiveSource {
    /// Opens a file on disk, telling plain WARC, gzip WARC and ZIP apart by
    /// their leading bytes.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, WarcError> {
        let path = path.as_ref();
        let mut magic = [0u8; 4];
        let mut file = File::open(path)?;
        let n = read_up_to(&mut file, &mut magic)?;
        let kind = sniff_kind(&magic[..n]);
        Ok(Self {
            kind,
            locator: Locator::File(path.to_path_buf()),
            member_offsets: Vec::new(),
        })
    }

    pub fn with_kind(kind: SourceKind, locator: Locator) -> Self {
        Self {
            kind,
            locator,
            member_offsets: Vec::new(),
        }
    }

    /// Raw bytes of the WARC stream, starting `skip` bytes in.
    fn open_at(&self, skip: u64) -> Result<Box<dyn BufRead + Send>, WarcError> {
        match &self.locator {
            Locator::File(path) => {
                let mut file = File::open(path)?;
                file.seek(SeekFrom::Start(skip))?;
                Ok(Box::new(BufReader::new(file)))
            }
            Locator::ZipMember { container, member } => {
                crate::wacz::open_member(container, member, skip)
            }
        }
    }
}

pub(crate) fn sniff_kind(magic: &[u8]) -> SourceKind {
    if magic.starts_with(&[0x1f, 0x8b]) {
        SourceKind::WarcGzip
    } else if magic.starts_with(b"PK") {
        SourceKind::Wacz
    } else {
        SourceKind::WarcPlain
    }
}

pub(crate) fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Streams the records of a WARC source in file order.
pub fn parse_warc(
    source: &ArchiveSource,
) -> Result<RecordReader<Box<dyn BufRead + Send>>, WarcError> {
    parse_warc_with(source, ParseOptions::default())
}

pub fn parse_warc_with(
    source: &ArchiveSource,
    opts: ParseOptions,
) -> Result<RecordReader<Box<dyn BufRead + Send>>, WarcError> {
    let gzip = match source.kind {
        SourceKind::WarcPlain => false,
        SourceKind::WarcGzip => true,
        SourceKind::Wacz => return Err(WarcError::NotAWarc(source.locator.to_string())),
    };
    Ok(RecordReader::new(source.open_at(0)?, gzip, opts))
}

/// Parses a whole source, recording member offsets on it. Stops at the
/// first error, returning it along with the records read so far.
pub fn read_all(
    source: &mut ArchiveSource,
) -> (Vec<ParsedRecord>, Option<WarcError>) {
    let mut out = Vec::new();
    let iter = match parse_warc(source) {
        Ok(iter) => iter,
        Err(e) => return (out, Some(e)),
    };
    let mut error = None;
    for item in iter {
        match item {
            Ok(rec) => out.push(rec),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    source.member_offsets = out.iter().map(|r| (r.offset, r.length)).collect();
    (out, error)
}

/// Re-reads the single record at `(offset, length)`.
pub fn read_record_at(
    source: &ArchiveSource,
    offset: u64,
    length: u64,
) -> Result<CaptureRecord, WarcError> {
    let gzip = match source.kind {
        SourceKind::WarcPlain => false,
        SourceKind::WarcGzip => true,
        SourceKind::Wacz => return Err(WarcError::NotAWarc(source.locator.to_string())),
    };
    let stream = source.open_at(offset)?;
    let bounded = BufReader::new(stream.take(length));
    let mut reader = RecordReader::starting_at(bounded, gzip, ParseOptions::default(), offset);
    match reader.next() {
        Some(Ok(parsed)) => Ok(parsed.record),
        Some(Err(e)) => Err(e),
        None => Err(WarcError::TruncatedRecord {
            offset,
            expected: length,
            got: 0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn record(kind: RecordType, target: Option<&str>, body: &[u8]) -> CaptureRecord {
        let http = matches!(kind, RecordType::Response).then(|| HttpHead {
            start: StartLine::Response {
                version: "HTTP/1.1".into(),
                status: 200,
                reason: "OK".into(),
            },
            headers: vec![("Content-Type".into(), b"text/html".to_vec())],
        });
        CaptureRecord {
            record_type: kind,
            record_id: format!("<urn:uuid:{}>", body.len()),
            warc_date: Utc.with_ymd_and_hms(2023, 8, 22, 16, 15, 44).unwrap(),
            target_uri: target.map(str::to_string),
            content_type: Some(if http.is_some() {
                "application/http; msgtype=response".into()
            } else {
                "application/warc-fields".into()
            }),
            warc_headers: vec![],
            http,
            payload: body.to_vec().into(),
        }
    }

    fn parse_bytes(bytes: &[u8], gzip: bool) -> Vec<Result<ParsedRecord, WarcError>> {
        RecordReader::new(bytes, gzip, ParseOptions::default()).collect()
    }

    #[test]
    fn single_warcinfo() {
        let bytes = write_warc_bytes(&[record(RecordType::Warcinfo, None, b"software: x\r\n")], false)
            .unwrap();
        let parsed = parse_bytes(&bytes, false);
        assert_eq!(parsed.len(), 1);
        assert_eq!(
            parsed[0].as_ref().unwrap().record.record_type,
            RecordType::Warcinfo
        );
    }

    #[test]
    fn header_serialization_is_exact() {
        let bytes = write_warc_bytes(&[record(RecordType::Response, Some("https://a.test/"), b"hi")], false)
            .unwrap();
        let expected = "WARC/1.1\r\n\
            WARC-Type: response\r\n\
            WARC-Record-ID: <urn:uuid:2>\r\n\
            WARC-Date: 2023-08-22T16:15:44Z\r\n\
            WARC-Target-URI: https://a.test/\r\n\
            Content-Type: application/http; msgtype=response\r\n\
            Content-Length: 46\r\n\
            \r\n\
            HTTP/1.1 200 OK\r\n\
            Content-Type: text/html\r\n\
            \r\n\
            hi\r\n\r\n";
        assert_eq!(String::from_utf8(bytes).unwrap(), expected);
    }

    #[test]
    fn accepts_warc_1_0_input() {
        let text = "WARC/1.0\r\nWARC-Type: metadata\r\nWARC-Record-ID: <urn:x>\r\n\
            WARC-Date: 2020-01-01T00:00:00.123Z\r\nContent-Length: 3\r\n\r\nabc\r\n\r\n";
        let parsed = parse_bytes(text.as_bytes(), false);
        let rec = &parsed[0].as_ref().unwrap().record;
        assert_eq!(rec.payload, Payload::Inline(b"abc".to_vec()));
        assert_eq!(rec.warc_date, Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap());
    }

    #[test]
    fn bad_version_line() {
        let parsed = parse_bytes(b"HTTP/1.1 200 OK\r\n\r\n", false);
        assert!(matches!(parsed[0], Err(WarcError::BadVersionLine { .. })));
        let parsed = parse_bytes(b"WARC/0.17\r\n\r\n", false);
        assert!(matches!(parsed[0], Err(WarcError::BadVersionLine { .. })));
    }

    #[test]
    fn truncated_block() {
        let text = "WARC/1.1\r\nWARC-Type: metadata\r\nWARC-Record-ID: <urn:x>\r\n\
            WARC-Date: 2020-01-01T00:00:00Z\r\nContent-Length: 30\r\n\r\nabc";
        let parsed = parse_bytes(text.as_bytes(), false);
        assert!(matches!(
            parsed[0],
            Err(WarcError::TruncatedRecord { expected: 30, got: 3, .. })
        ));
    }

    #[test]
    fn trailing_garbage_after_valid_records() {
        let mut bytes = write_warc_bytes(&[record(RecordType::Metadata, None, b"a")], false).unwrap();
        bytes.extend_from_slice(b"garbage");
        let parsed = parse_bytes(&bytes, false);
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].is_ok());
        assert!(matches!(parsed[1], Err(WarcError::BadVersionLine { .. })));
    }

    #[test]
    fn unparseable_http_block_kept_whole() {
        let mut rec = record(RecordType::Response, Some("https://a.test/"), b"not http at all");
        rec.http = None;
        let bytes = write_warc_bytes(&[rec.clone()], false).unwrap();
        let parsed = parse_bytes(&bytes, false);
        assert_eq!(parsed[0].as_ref().unwrap().record, rec);
    }

    #[test]
    fn empty_input_yields_nothing() {
        assert!(parse_bytes(b"", false).is_empty());
        assert!(parse_bytes(b"", true).is_empty());
        assert!(write_warc_bytes(&[], true).unwrap().is_empty());
    }

    #[test]
    fn spills_large_payloads() {
        let body = vec![7u8; 4096];
        let bytes = write_warc_bytes(&[record(RecordType::Response, Some("https://a.test/v.mp4"), &body)], true)
            .unwrap();
        let opts = ParseOptions { spill_threshold: 1024 };
        let parsed: Vec<_> = RecordReader::new(bytes.as_slice(), true, opts).collect();
        let rec = &parsed[0].as_ref().unwrap().record;
        assert!(rec.payload.is_spilled());
        assert_eq!(rec.payload.to_vec().unwrap(), body);
    }

    #[test]
    fn locator_display_roundtrip() {
        for loc in [
            Locator::File("/tmp/a.warc.gz".into()),
            Locator::ZipMember {
                container: "/tmp/c.wacz".into(),
                member: "archive/data.warc.gz".into(),
            },
        ] {
            assert_eq!(Locator::parse(&loc.to_string()), loc);
        }
    }
}
