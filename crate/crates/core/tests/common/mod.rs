#![allow(dead_code)]

use std::path::{Path, PathBuf};

use adreplay_core::warc::write_warc;
use adreplay_core::{build_index, ArchiveSource, CaptureIndex, CaptureRecord, Timestamp14};
use chrono::{DateTime, Utc};

pub fn at(ts14: &str) -> DateTime<Utc> {
    Timestamp14::parse(ts14).unwrap().to_datetime()
}

pub fn ts(ts14: &str) -> Timestamp14 {
    Timestamp14::parse(ts14).unwrap()
}

pub fn response(url: &str, ts14: &str, mime: &str, body: &[u8]) -> CaptureRecord {
    CaptureRecord::response(url, at(ts14), 200, &[("Content-Type", mime)], body.to_vec())
}

pub fn write(dir: &Path, name: &str, records: &[CaptureRecord], gzip: bool) -> PathBuf {
    let path = dir.join(name);
    write_warc(records, gzip, &path).unwrap();
    path
}

pub fn index_of(dir: &Path, records: &[CaptureRecord]) -> CaptureIndex {
    let path = write(dir, "fixture.warc.gz", records, true);
    let (index, reports) = build_index(vec![ArchiveSource::from_path(path).unwrap()]);
    assert!(reports.iter().all(|r| r.error.is_none()), "{reports:?}");
    index
}
