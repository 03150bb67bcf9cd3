//! WACZ containers: ZIP files holding WARC members under `archive/`.
//!
//! Embedded CDXJ indexes and page lists are ignored; the capture index is
//! always rebuilt from the WARC members themselves.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use zip::result::ZipError;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use crate::warc::{read_up_to, sniff_kind, ArchiveSource, Locator, SourceKind, WarcError};

pub const ARCHIVE_DIR: &str = "archive/";

fn open_zip(path: &Path) -> Result<ZipArchive<File>, WarcError> {
    let file = File::open(path)?;
    ZipArchive::new(file).map_err(|e| match e {
        ZipError::Io(io) => WarcError::Io(io),
        other => WarcError::NotAZip(format!("{}: {other}", path.display())),
    })
}

fn is_warc_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.starts_with(ARCHIVE_DIR) && (lower.ends_with(".warc") || lower.ends_with(".warc.gz"))
}

/// Lists the WARC members of a WACZ as individual sources, in ZIP order.
pub fn open_wacz(path: impl AsRef<Path>) -> Result<Vec<ArchiveSource>, WarcError> {
    let path = path.as_ref();
    let mut zip = open_zip(path)?;
    let mut sources = Vec::new();
    for i in 0..zip.len() {
        let mut entry = zip.by_index(i).map_err(zip_err)?;
        if entry.is_dir() || !is_warc_name(entry.name()) {
            continue;
        }
        let name = entry.name().to_string();
        let mut magic = [0u8; 2];
        let n = read_up_to(&mut entry, &mut magic)?;
        let kind = match sniff_kind(&magic[..n]) {
            SourceKind::WarcGzip => SourceKind::WarcGzip,
            _ => SourceKind::WarcPlain,
        };
        sources.push(ArchiveSource::with_kind(
            kind,
            Locator::ZipMember {
                container: path.to_path_buf(),
                member: name,
            },
        ));
    }
    if sources.is_empty() {
        return Err(WarcError::NoArchiveMembers(path.to_path_buf()));
    }
    Ok(sources)
}

fn zip_err(e: ZipError) -> WarcError {
    match e {
        ZipError::Io(io) => WarcError::Io(io),
        other => WarcError::NotAZip(other.to_string()),
    }
}

/// Opens the bytes of one member, skipping its first `skip` bytes. Stored
/// members are read straight from the container; compressed ones are
/// inflated into a temporary file first.
pub(crate) fn open_member(
    container: &Path,
    member: &str,
    skip: u64,
) -> Result<Box<dyn BufRead + Send>, WarcError> {
    let mut zip = open_zip(container)?;
    let mut entry = zip.by_name(member).map_err(zip_err)?;
    if entry.compression() == CompressionMethod::Stored {
        let start = entry.data_start();
        let size = entry.size();
        drop(entry);
        let mut file = File::open(container)?;
        file.seek(SeekFrom::Start(start + skip.min(size)))?;
        return Ok(Box::new(BufReader::new(file.take(size.saturating_sub(skip)))));
    }
    let mut tmp = tempfile::tempfile()?;
    io::copy(&mut entry, &mut tmp)?;
    tmp.seek(SeekFrom::Start(skip))?;
    Ok(Box::new(BufReader::new(tmp)))
}

/// Packs WARC files into a minimal WACZ (members stored uncompressed under
/// `archive/`, plus a `datapackage.json` listing them).
pub fn pack_wacz(out: &Path, warcs: &[PathBuf]) -> Result<(), WarcError> {
    let mut zip = ZipWriter::new(File::create(out)?);
    let opts = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .large_file(true);
    let mut resources = Vec::new();
    for path in warcs {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "WARC path has no file name"))?;
        let member = format!("{ARCHIVE_DIR}{name}");
        zip.start_file(member.as_str(), opts).map_err(zip_err)?;
        let mut file = File::open(path)?;
        let bytes = io::copy(&mut file, &mut zip)?;
        resources.push(serde_json::json!({ "name": name, "path": member, "bytes": bytes }));
    }
    zip.start_file("datapackage.json", opts).map_err(zip_err)?;
    let package = serde_json::json!({
        "profile": "data-package",
        "wacz_version": "1.1.1",
        "resources": resources,
    });
    zip.write_all(serde_json::to_string_pretty(&package).map_err(io::Error::other)?.as_bytes())?;
    zip.finish().map_err(zip_err)?;
    Ok(())
}
