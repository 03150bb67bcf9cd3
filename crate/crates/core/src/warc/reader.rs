use std::io::{self, BufRead, BufReader, Cursor, Read, Seek, SeekFrom, Write};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use flate2::bufread::GzDecoder;
use tempfile::NamedTempFile;

use super::record::{CaptureRecord, HttpHead, Payload, RecordType, StartLine};
use super::WarcError;

/// Payloads larger than this are written to a temporary file.
pub const DEFAULT_SPILL_THRESHOLD: u64 = 64 * 1024 * 1024;

const MAX_LINE: usize = 64 * 1024;

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub spill_threshold: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            spill_threshold: DEFAULT_SPILL_THRESHOLD,
        }
    }
}

/// A record together with the byte range it occupies in its source. For
/// gzip sources the range covers the whole compressed member.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub record: CaptureRecord,
    pub offset: u64,
    pub length: u64,
}

pub(crate) struct CountingReader<R> {
    inner: R,
    pos: u64,
}

impl<R> CountingReader<R> {
    pub(crate) fn new(inner: R, pos: u64) -> Self {
        Self { inner, pos }
    }
}

impl<R: BufRead> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

impl<R: BufRead> BufRead for CountingReader<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.pos += amt as u64;
        self.inner.consume(amt);
    }
}

/// Streaming record reader over a plain or per-record-gzip WARC.
pub struct RecordReader<R> {
    inner: CountingReader<R>,
    gzip: bool,
    opts: ParseOptions,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R, gzip: bool, opts: ParseOptions) -> Self {
        Self::starting_at(inner, gzip, opts, 0)
    }

    /// `base` is the source offset of the first byte `inner` yields.
    pub fn starting_at(inner: R, gzip: bool, opts: ParseOptions, base: u64) -> Self {
        Self {
            inner: CountingReader::new(inner, base),
            gzip,
            opts,
            done: false,
        }
    }

    fn next_plain(&mut self) -> Result<Option<ParsedRecord>, WarcError> {
        skip_newlines(&mut self.inner)?;
        if self.inner.fill_buf()?.is_empty() {
            return Ok(None);
        }
        let offset = self.inner.pos;
        let record = parse_record(&mut self.inner, offset, &self.opts)?;
        Ok(Some(ParsedRecord {
            record,
            offset,
            length: self.inner.pos - offset,
        }))
    }

    fn next_gzip(&mut self) -> Result<Option<ParsedRecord>, WarcError> {
        loop {
            if self.inner.fill_buf()?.is_empty() {
                return Ok(None);
            }
            let offset = self.inner.pos;
            let mut member = SpillBuffer::new(self.opts.spill_threshold);
            let mut decoder = GzDecoder::new(&mut self.inner);
            io::copy(&mut decoder, &mut member)
                .map_err(|source| WarcError::BadGzipMember { offset, source })?;
            let length = self.inner.pos - offset;
            if length == 0 {
                return Err(WarcError::BadGzipMember {
                    offset,
                    source: io::Error::new(io::ErrorKind::InvalidData, "empty gzip member"),
                });
            }
            let mut body = member.into_reader()?;
            skip_newlines(&mut body)?;
            if body.fill_buf()?.is_empty() {
                // an empty member carries no record
                continue;
            }
            let record = parse_record(&mut body, offset, &self.opts)?;
            skip_newlines(&mut body)?;
            if !body.fill_buf()?.is_empty() {
                return Err(WarcError::MultiRecordMember { offset });
            }
            return Ok(Some(ParsedRecord {
                record,
                offset,
                length,
            }));
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<ParsedRecord, WarcError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let result = if self.gzip {
            self.next_gzip()
        } else {
            self.next_plain()
        };
        match result {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn skip_newlines<R: BufRead + ?Sized>(r: &mut R) -> io::Result<()> {
    loop {
        let buf = r.fill_buf()?;
        if buf.is_empty() {
            return Ok(());
        }
        let n = buf.iter().take_while(|b| **b == b'\r' || **b == b'\n').count();
        if n == 0 {
            return Ok(());
        }
        r.consume(n);
    }
}

fn read_line<R: BufRead + ?Sized>(mut r: &mut R, out: &mut Vec<u8>) -> io::Result<usize> {
    out.clear();
    let n = (&mut r).take(MAX_LINE as u64).read_until(b'\n', out)?;
    Ok(n)
}

fn trim_eol(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn trim_ows(v: &[u8]) -> &[u8] {
    let start = v.iter().position(|b| *b != b' ' && *b != b'\t').unwrap_or(v.len());
    let end = v
        .iter()
        .rposition(|b| *b != b' ' && *b != b'\t')
        .map(|p| p + 1)
        .unwrap_or(start);
    &v[start..end.max(start)]
}

fn parse_warc_date(value: &str) -> Option<DateTime<Utc>> {
    let dt = DateTime::parse_from_rfc3339(value).ok()?.with_timezone(&Utc);
    DateTime::from_timestamp(dt.timestamp(), 0)
}

/// Parses exactly one record starting at the reader's position. Consumes
/// the record's trailing newlines.
pub(crate) fn parse_record<R: BufRead + ?Sized>(
    r: &mut R,
    offset: u64,
    opts: &ParseOptions,
) -> Result<CaptureRecord, WarcError> {
    let mut line = Vec::new();
    read_line(r, &mut line)?;
    let version = String::from_utf8_lossy(trim_eol(&line)).into_owned();
    if !(version.starts_with("WARC/1.") && version.len() > 7) {
        return Err(WarcError::BadVersionLine { offset, line: version });
    }

    let mut headers: Vec<(String, String)> = Vec::new();
    loop {
        let n = read_line(r, &mut line)?;
        if n == 0 {
            return Err(WarcError::TruncatedRecord {
                offset,
                expected: 0,
                got: 0,
            });
        }
        let content = trim_eol(&line);
        if content.is_empty() {
            break;
        }
        if content[0] == b' ' || content[0] == b'\t' {
            let (_, value) = headers.last_mut().ok_or_else(|| WarcError::MalformedHeader {
                offset,
                reason: "continuation line before any header".into(),
            })?;
            value.push(' ');
            value.push_str(&String::from_utf8_lossy(trim_ows(content)));
            continue;
        }
        let colon = content
            .iter()
            .position(|b| *b == b':')
            .ok_or_else(|| WarcError::MalformedHeader {
                offset,
                reason: format!("no colon in {:?}", String::from_utf8_lossy(content)),
            })?;
        let name = String::from_utf8_lossy(trim_ows(&content[..colon])).into_owned();
        let value = String::from_utf8_lossy(trim_ows(&content[colon + 1..])).into_owned();
        headers.push((name, value));
    }

    let mut record_type = None;
    let mut record_id = None;
    let mut warc_date = None;
    let mut target_uri = None;
    let mut content_type = None;
    let mut content_length = None;
    let mut rest = Vec::new();
    for (name, value) in headers {
        match name.to_ascii_lowercase().as_str() {
            "warc-type" => {
                record_type = Some(value.parse::<RecordType>().map_err(|t| {
                    WarcError::MalformedHeader {
                        offset,
                        reason: format!("unsupported WARC-Type {t:?}"),
                    }
                })?)
            }
            "warc-record-id" => record_id = Some(value),
            "warc-date" => {
                warc_date = Some(parse_warc_date(&value).ok_or_else(|| {
                    WarcError::MalformedHeader {
                        offset,
                        reason: format!("bad WARC-Date {value:?}"),
                    }
                })?)
            }
            "warc-target-uri" => {
                let v = value.strip_prefix('<').unwrap_or(&value);
                let v = v.strip_suffix('>').unwrap_or(v);
                target_uri = Some(v.to_string());
            }
            "content-type" => content_type = Some(value),
            "content-length" => {
                content_length = Some(value.parse::<u64>().map_err(|_| {
                    WarcError::MalformedHeader {
                        offset,
                        reason: format!("bad Content-Length {value:?}"),
                    }
                })?)
            }
            _ => rest.push((name, value)),
        }
    }
    let missing = |field| WarcError::MalformedHeader {
        offset,
        reason: format!("missing {field}"),
    };
    let record_type = record_type.ok_or_else(|| missing("WARC-Type"))?;
    let record_id = record_id.ok_or_else(|| missing("WARC-Record-ID"))?;
    let warc_date = warc_date.ok_or_else(|| missing("WARC-Date"))?;
    let content_length = content_length.ok_or_else(|| missing("Content-Length"))?;

    let is_http = content_type
        .as_deref()
        .map(|ct| ct.to_ascii_lowercase().starts_with("application/http"))
        .unwrap_or(false);

    let mut block = r.take(content_length);
    let mut head_bytes = Vec::new();
    let mut http = None;
    if is_http {
        http = read_http_head(&mut block, &mut head_bytes)?;
        if http.is_some() {
            head_bytes.clear();
        }
    }
    let remaining = content_length - head_bytes.len() as u64 - consumed_head(&http);
    let payload = read_payload(&mut block, head_bytes, remaining, opts.spill_threshold)?;
    let got = content_length - block.limit();
    if block.limit() > 0 {
        return Err(WarcError::TruncatedRecord {
            offset,
            expected: content_length,
            got,
        });
    }
    skip_trailer(r)?;

    Ok(CaptureRecord {
        record_type,
        record_id,
        warc_date,
        target_uri,
        content_type,
        warc_headers: rest,
        http,
        payload,
    })
}

fn consumed_head(http: &Option<HttpHead>) -> u64 {
    http.as_ref().map(|h| h.to_bytes().len() as u64).unwrap_or(0)
}

/// Reads an HTTP message head. Returns `None` when the block does not start
/// with a well-formed head; `raw` then holds the bytes consumed so far.
fn read_http_head<R: BufRead>(
    block: &mut R,
    raw: &mut Vec<u8>,
) -> Result<Option<HttpHead>, WarcError> {
    let mut line = Vec::new();
    let n = read_line(block, &mut line)?;
    raw.extend_from_slice(&line);
    if n == 0 {
        return Ok(None);
    }
    let Some(start) = StartLine::parse(trim_eol(&line)) else {
        return Ok(None);
    };
    let mut headers: Vec<(String, Vec<u8>)> = Vec::new();
    loop {
        let n = read_line(block, &mut line)?;
        raw.extend_from_slice(&line);
        if n == 0 || !line.ends_with(b"\n") {
            return Ok(None);
        }
        let content = trim_eol(&line);
        if content.is_empty() {
            break;
        }
        if content[0] == b' ' || content[0] == b'\t' {
            match headers.last_mut() {
                Some((_, value)) => {
                    value.push(b' ');
                    value.extend_from_slice(trim_ows(content));
                    continue;
                }
                None => return Ok(None),
            }
        }
        let Some(colon) = content.iter().position(|b| *b == b':') else {
            return Ok(None);
        };
        let name = String::from_utf8_lossy(trim_ows(&content[..colon])).into_owned();
        headers.push((name, trim_ows(&content[colon + 1..]).to_vec()));
    }
    let head = HttpHead { start, headers };
    // Only accept heads that re-serialize to exactly the bytes read, so
    // that payload offsets and round trips stay byte-exact.
    if head.to_bytes() != *raw {
        return Ok(None);
    }
    Ok(Some(head))
}

fn read_payload<R: Read>(
    block: &mut R,
    prefix: Vec<u8>,
    remaining: u64,
    threshold: u64,
) -> Result<Payload, WarcError> {
    let total = prefix.len() as u64 + remaining;
    if total <= threshold {
        let mut bytes = prefix;
        block.take(remaining).read_to_end(&mut bytes)?;
        return Ok(Payload::Inline(bytes));
    }
    let mut file = NamedTempFile::new()?;
    file.write_all(&prefix)?;
    let copied = io::copy(&mut block.take(remaining), &mut file)?;
    file.flush()?;
    Ok(Payload::Spilled {
        file: Arc::new(file),
        len: prefix.len() as u64 + copied,
    })
}

fn skip_trailer<R: BufRead + ?Sized>(r: &mut R) -> io::Result<()> {
    let mut seen = 0;
    while seen < 4 {
        let buf = r.fill_buf()?;
        match buf.first() {
            Some(b'\r') | Some(b'\n') => {
                r.consume(1);
                seen += 1;
            }
            _ => break,
        }
    }
    Ok(())
}

/// Write sink that keeps data in memory up to a threshold and then moves
/// it to a temporary file.
pub(crate) struct SpillBuffer {
    threshold: u64,
    mem: Vec<u8>,
    file: Option<NamedTempFile>,
}

impl SpillBuffer {
    pub(crate) fn new(threshold: u64) -> Self {
        Self {
            threshold,
            mem: Vec::new(),
            file: None,
        }
    }

    pub(crate) fn into_reader(self) -> io::Result<Box<dyn BufRead + Send>> {
        match self.file {
            None => Ok(Box::new(Cursor::new(self.mem))),
            Some(file) => {
                let mut handle = file.reopen()?;
                handle.seek(SeekFrom::Start(0))?;
                Ok(Box::new(TempReader {
                    inner: BufReader::new(handle),
                    _file: file,
                }))
            }
        }
    }
}

impl Write for SpillBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if let Some(file) = &mut self.file {
            return file.write(buf);
        }
        if (self.mem.len() + buf.len()) as u64 > self.threshold {
            let mut file = NamedTempFile::new()?;
            file.write_all(&self.mem)?;
            self.mem = Vec::new();
            let n = file.write(buf)?;
            self.file = Some(file);
            return Ok(n);
        }
        self.mem.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        match &mut self.file {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}

struct TempReader {
    inner: BufReader<std::fs::File>,
    _file: NamedTempFile,
}

impl Read for TempReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.inner.read(buf)
    }
}

impl BufRead for TempReader {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt)
    }
}
