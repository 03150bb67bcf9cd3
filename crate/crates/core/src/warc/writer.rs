use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;

use super::record::CaptureRecord;
use super::{ArchiveSource, Locator, SourceKind, WarcError};

struct CountingWriter<W> {
    inner: W,
    pos: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.pos += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Serializes records as WARC/1.1, optionally one gzip member per record.
pub struct WarcWriter<W: Write> {
    out: CountingWriter<W>,
    gzip: bool,
    offsets: Vec<(u64, u64)>,
}

impl<W: Write> WarcWriter<W> {
    pub fn new(out: W, gzip: bool) -> Self {
        Self {
            out: CountingWriter { inner: out, pos: 0 },
            gzip,
            offsets: Vec::new(),
        }
    }

    /// Returns the (offset, length) the record occupies in the output.
    pub fn write_record(&mut self, record: &CaptureRecord) -> Result<(u64, u64), WarcError> {
        validate(record)?;
        let start = self.out.pos;
        if self.gzip {
            let mut enc = GzEncoder::new(&mut self.out, Compression::default());
            serialize(record, &mut enc)?;
            enc.finish()?;
        } else {
            serialize(record, &mut self.out)?;
        }
        let span = (start, self.out.pos - start);
        self.offsets.push(span);
        Ok(span)
    }

    pub fn finish(mut self) -> Result<(W, Vec<(u64, u64)>), WarcError> {
        self.out.flush()?;
        Ok((self.out.inner, self.offsets))
    }
}

fn validate(record: &CaptureRecord) -> Result<(), WarcError> {
    if record.record_id.is_empty() {
        return Err(WarcError::MissingField("WARC-Record-ID"));
    }
    if record.record_type.requires_target() {
        let target = record
            .target_uri
            .as_deref()
            .ok_or(WarcError::MissingField("WARC-Target-URI"))?;
        if url::Url::parse(target).is_err() {
            return Err(WarcError::MissingField("absolute WARC-Target-URI"));
        }
    }
    Ok(())
}

fn serialize<W: Write>(record: &CaptureRecord, out: &mut W) -> Result<(), WarcError> {
    let head = record.http.as_ref().map(|h| h.to_bytes()).unwrap_or_default();
    let block_len = head.len() as u64 + record.payload.len();

    let mut header = String::with_capacity(256);
    header.push_str("WARC/1.1\r\n");
    header.push_str(&format!("WARC-Type: {}\r\n", record.record_type));
    header.push_str(&format!("WARC-Record-ID: {}\r\n", record.record_id));
    header.push_str(&format!(
        "WARC-Date: {}\r\n",
        record.warc_date.format("%Y-%m-%dT%H:%M:%SZ")
    ));
    if let Some(target) = &record.target_uri {
        header.push_str(&format!("WARC-Target-URI: {target}\r\n"));
    }
    if let Some(ct) = &record.content_type {
        header.push_str(&format!("Content-Type: {ct}\r\n"));
    }
    for (name, value) in &record.warc_headers {
        header.push_str(&format!("{name}: {value}\r\n"));
    }
    header.push_str(&format!("Content-Length: {block_len}\r\n\r\n"));

    out.write_all(header.as_bytes())?;
    out.write_all(&head)?;
    io::copy(&mut record.payload.reader()?, out)?;
    out.write_all(b"\r\n\r\n")?;
    Ok(())
}

/// Writes `records` to `path` and returns the resulting source with its
/// per-record offsets filled in.
pub fn write_warc(
    records: &[CaptureRecord],
    gzip: bool,
    path: &Path,
) -> Result<ArchiveSource, WarcError> {
    let file = BufWriter::new(File::create(path)?);
    let mut writer = WarcWriter::new(file, gzip);
    for record in records {
        writer.write_record(record)?;
    }
    let (mut file, offsets) = writer.finish()?;
    file.flush()?;
    Ok(ArchiveSource {
        kind: if gzip {
            SourceKind::WarcGzip
        } else {
            SourceKind::WarcPlain
        },
        locator: Locator::File(path.to_path_buf()),
        member_offsets: offsets,
    })
}

/// Serializes records into an in-memory buffer.
pub fn write_warc_bytes(records: &[CaptureRecord], gzip: bool) -> Result<Vec<u8>, WarcError> {
    let mut writer = WarcWriter::new(Vec::new(), gzip);
    for record in records {
        writer.write_record(record)?;
    }
    Ok(writer.finish()?.0)
}
