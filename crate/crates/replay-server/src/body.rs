//! Undoing transfer and content codings that archives keep verbatim.

use std::io::Read;

use flate2::read::{DeflateDecoder, MultiGzDecoder, ZlibDecoder};

/// Decodes an HTTP/1.1 chunked body. `None` if the framing is broken.
pub fn dechunk(raw: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(raw.len());
    let mut rest = raw;
    loop {
        let line_end = rest.windows(2).position(|w| w == b"\r\n")?;
        let line = std::str::from_utf8(&rest[..line_end]).ok()?;
        let size_text = line.split(';').next()?.trim();
        let size = usize::from_str_radix(size_text, 16).ok()?;
        rest = &rest[line_end + 2..];
        if size == 0 {
            return Some(out);
        }
        if rest.len() < size {
            return None;
        }
        out.extend_from_slice(&rest[..size]);
        rest = &rest[size..];
        rest = rest.strip_prefix(b"\r\n").unwrap_or(rest);
    }
}

/// Decodes gzip or deflate. `None` for codings we cannot undo, or on
/// corrupt input.
pub fn decode_content(coding: &str, body: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    let ok = match coding.trim().to_ascii_lowercase().as_str() {
        "" | "identity" => return Some(body.to_vec()),
        "gzip" | "x-gzip" => MultiGzDecoder::new(body).read_to_end(&mut out).is_ok(),
        // Servers disagree on whether deflate means zlib-wrapped or raw.
        "deflate" => {
            ZlibDecoder::new(body).read_to_end(&mut out).is_ok() || {
                out.clear();
                DeflateDecoder::new(body).read_to_end(&mut out).is_ok()
            }
        }
        _ => false,
    };
    ok.then_some(out)
}
