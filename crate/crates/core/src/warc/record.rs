use std::fmt;
use std::io::{self, Read};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordType {
    Warcinfo,
    Request,
    Response,
    Resource,
    Metadata,
    Revisit,
}

impl RecordType {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordType::Warcinfo => "warcinfo",
            RecordType::Request => "request",
            RecordType::Response => "response",
            RecordType::Resource => "resource",
            RecordType::Metadata => "metadata",
            RecordType::Revisit => "revisit",
        }
    }

    /// Record types whose target URI must be absolute.
    pub fn requires_target(&self) -> bool {
        matches!(
            self,
            RecordType::Request | RecordType::Response | RecordType::Resource
        )
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecordType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "warcinfo" => RecordType::Warcinfo,
            "request" => RecordType::Request,
            "response" => RecordType::Response,
            "resource" => RecordType::Resource,
            "metadata" => RecordType::Metadata,
            "revisit" => RecordType::Revisit,
            other => return Err(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartLine {
    Request {
        method: String,
        target: String,
        version: String,
    },
    Response {
        version: String,
        status: u16,
        reason: String,
    },
}

impl StartLine {
    pub(crate) fn parse(line: &[u8]) -> Option<Self> {
        let line = std::str::from_utf8(line).ok()?;
        if line.starts_with("HTTP/") {
            let mut parts = line.splitn(3, ' ');
            let version = parts.next()?.to_string();
            let code = parts.next()?;
            if code.len() != 3 || !code.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let status: u16 = code.parse().ok()?;
            if !(100..=599).contains(&status) {
                return None;
            }
            let reason = parts.next().unwrap_or("").to_string();
            Some(StartLine::Response {
                version,
                status,
                reason,
            })
        } else {
            let mut parts = line.split(' ');
            let method = parts.next()?.to_string();
            let target = parts.next()?.to_string();
            let version = parts.next()?.to_string();
            if parts.next().is_some() || method.is_empty() || !version.starts_with("HTTP/") {
                return None;
            }
            Some(StartLine::Request {
                method,
                target,
                version,
            })
        }
    }

    fn render(&self) -> String {
        match self {
            StartLine::Request {
                method,
                target,
                version,
            } => format!("{method} {target} {version}"),
            StartLine::Response {
                version,
                status,
                reason,
            } if reason.is_empty() => format!("{version} {status}"),
            StartLine::Response {
                version,
                status,
                reason,
            } => format!("{version} {status} {reason}"),
        }
    }
}

/// Status line and headers of an archived HTTP message. Header values are
/// kept as raw bytes; archived servers send all sorts of encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpHead {
    pub start: StartLine,
    pub headers: Vec<(String, Vec<u8>)>,
}

impl HttpHead {
    pub fn status(&self) -> Option<u16> {
        match &self.start {
            StartLine::Response { status, .. } => Some(*status),
            StartLine::Request { .. } => None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_slice())
    }

    pub fn get_str(&self, name: &str) -> Option<String> {
        self.get(name).map(|v| String::from_utf8_lossy(v).into_owned())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.start.render().into_bytes();
        out.extend_from_slice(b"\r\n");
        for (name, value) in &self.headers {
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(b": ");
            out.extend_from_slice(value);
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out
    }
}

/// Record payload. Bodies above the spill threshold live in a temporary
/// file shared between clones.
#[derive(Clone)]
pub enum Payload {
    Inline(Vec<u8>),
    Spilled { file: Arc<NamedTempFile>, len: u64 },
}

impl Payload {
    pub fn len(&self) -> u64 {
        match self {
            Payload::Inline(bytes) => bytes.len() as u64,
            Payload::Spilled { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self, Payload::Spilled { .. })
    }

    pub fn reader(&self) -> io::Result<Box<dyn Read + Send + '_>> {
        match self {
            Payload::Inline(bytes) => Ok(Box::new(bytes.as_slice())),
            Payload::Spilled { file, len } => Ok(Box::new(file.reopen()?.take(*len))),
        }
    }

    pub fn to_vec(&self) -> io::Result<Vec<u8>> {
        match self {
            Payload::Inline(bytes) => Ok(bytes.clone()),
            Payload::Spilled { .. } => {
                let mut out = Vec::with_capacity(self.len() as usize);
                self.reader()?.read_to_end(&mut out)?;
                Ok(out)
            }
        }
    }
}

impl Default for Payload {
    fn default() -> Self {
        Payload::Inline(Vec::new())
    }
}

impl From<Vec<u8>> for Payload {
    fn from(bytes: Vec<u8>) -> Self {
        Payload::Inline(bytes)
    }
}

impl PartialEq for Payload {
    fn eq(&self, other: &Self) -> bool {
        if self.len() != other.len() {
            return false;
        }
        match (self, other) {
            (Payload::Inline(a), Payload::Inline(b)) => a == b,
            _ => match (self.to_vec(), other.to_vec()) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            },
        }
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Inline(bytes) => write!(f, "Payload::Inline({} bytes)", bytes.len()),
            Payload::Spilled { len, .. } => write!(f, "Payload::Spilled({len} bytes)"),
        }
    }
}

/// One archived record. For request/response/revisit records carrying an
/// `application/http` block, `http` holds the parsed message head and
/// `payload` the body that follows it; otherwise `payload` is the whole block.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureRecord {
    pub record_type: RecordType,
    pub record_id: String,
    pub warc_date: DateTime<Utc>,
    pub target_uri: Option<String>,
    pub content_type: Option<String>,
    /// Every other WARC header, in file order.
    pub warc_headers: Vec<(String, String)>,
    pub http: Option<HttpHead>,
    pub payload: Payload,
}

/// Record id derived from the record's identifying fields, so fixtures
/// built twice come out byte-identical.
fn derived_record_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    let d = hex::encode(&h.finalize()[..16]);
    format!("<urn:uuid:{}-{}-{}-{}-{}>", &d[..8], &d[8..12], &d[12..16], &d[16..20], &d[20..32])
}

impl CaptureRecord {
    /// A `response` record for an HTTP exchange. `headers` should not
    /// include Content-Length; it is added from the body.
    pub fn response(
        target: &str,
        date: DateTime<Utc>,
        status: u16,
        headers: &[(&str, &str)],
        body: impl Into<Vec<u8>>,
    ) -> Self {
        let body = body.into();
        let mut http_headers: Vec<(String, Vec<u8>)> = headers
            .iter()
            .map(|(n, v)| (n.to_string(), v.as_bytes().to_vec()))
            .collect();
        http_headers.push(("Content-Length".into(), body.len().to_string().into_bytes()));
        let reason = reason_phrase(status);
        let date_text = date.timestamp().to_be_bytes();
        Self {
            record_type: RecordType::Response,
            record_id: derived_record_id(&[b"response", target.as_bytes(), &date_text, &body]),
            warc_date: date,
            target_uri: Some(target.to_string()),
            content_type: Some("application/http; msgtype=response".into()),
            warc_headers: vec![(
                "WARC-Payload-Digest".into(),
                format!("sha256:{}", hex::encode(Sha256::digest(&body))),
            )],
            http: Some(HttpHead {
                start: StartLine::Response {
                    version: "HTTP/1.1".into(),
                    status,
                    reason: reason.into(),
                },
                headers: http_headers,
            }),
            payload: body.into(),
        }
    }

    /// A bodiless GET `request` record.
    pub fn request(target: &str, date: DateTime<Utc>) -> Self {
        let (path, host) = match url::Url::parse(target) {
            Ok(u) => {
                let mut path = u.path().to_string();
                if let Some(q) = u.query() {
                    path.push('?');
                    path.push_str(q);
                }
                (path, u.host_str().unwrap_or("").to_string())
            }
            Err(_) => ("/".to_string(), String::new()),
        };
        let date_text = date.timestamp().to_be_bytes();
        Self {
            record_type: RecordType::Request,
            record_id: derived_record_id(&[b"request", target.as_bytes(), &date_text]),
            warc_date: date,
            target_uri: Some(target.to_string()),
            content_type: Some("application/http; msgtype=request".into()),
            warc_headers: vec![],
            http: Some(HttpHead {
                start: StartLine::Request {
                    method: "GET".into(),
                    target: path,
                    version: "HTTP/1.1".into(),
                },
                headers: vec![("Host".into(), host.into_bytes())],
            }),
            payload: Payload::default(),
        }
    }

    pub fn http_status(&self) -> Option<u16> {
        self.http.as_ref().and_then(HttpHead::status)
    }

    pub fn http_headers(&self) -> &[(String, Vec<u8>)] {
        self.http.as_ref().map(|h| h.headers.as_slice()).unwrap_or(&[])
    }

    pub fn warc_header(&self, name: &str) -> Option<&str> {
        self.warc_headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn payload_digest(&self) -> Option<&str> {
        self.warc_header("WARC-Payload-Digest")
    }

    /// MIME type of the archived content, without parameters.
    pub fn mime(&self) -> Option<String> {
        let raw = match &self.http {
            Some(head) => head.get_str("Content-Type"),
            None => self.content_type.clone(),
        }?;
        let mime = raw.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        (!mime.is_empty()).then_some(mime)
    }

    pub fn block_len(&self) -> u64 {
        let head = self.http.as_ref().map(|h| h.to_bytes().len()).unwrap_or(0) as u64;
        head + self.payload.len()
    }
}

fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        204 => "No Content",
        206 => "Partial Content",
        301 => "Moved Permanently",
        302 => "Found",
        304 => "Not Modified",
        307 => "Temporary Redirect",
        404 => "Not Found",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "",
    }
}
