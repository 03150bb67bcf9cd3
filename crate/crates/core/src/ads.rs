//! Ad resource classification and the Save Page Now blocklist simulator.

use serde::{Deserialize, Serialize};

use crate::canon::{parse_http_url, CanonError};
use crate::index::CdxEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    GoogleDisplay,
    GoogleSafeframe,
    Amazon,
    Flashtalking,
    Innovid,
    Unknown,
}

impl Service {
    pub const ALL: [Service; 6] = [
        Service::GoogleDisplay,
        Service::GoogleSafeframe,
        Service::Amazon,
        Service::Flashtalking,
        Service::Innovid,
        Service::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Service::GoogleDisplay => "google_display",
            Service::GoogleSafeframe => "google_safeframe",
            Service::Amazon => "amazon",
            Service::Flashtalking => "flashtalking",
            Service::Innovid => "innovid",
            Service::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdType {
    Image,
    Video,
    EmbeddedWebPage,
    Other,
}

impl AdType {
    pub const ALL: [AdType; 4] = [AdType::Image, AdType::Video, AdType::EmbeddedWebPage, AdType::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            AdType::Image => "image",
            AdType::Video => "video",
            AdType::EmbeddedWebPage => "embedded_web_page",
            AdType::Other => "other",
        }
    }

    pub fn from_mime(mime: &str) -> Self {
        let mime = mime.trim().to_ascii_lowercase();
        if mime.starts_with("image/") {
            AdType::Image
        } else if mime.starts_with("video/") {
            AdType::Video
        } else if mime == "text/html" {
            AdType::EmbeddedWebPage
        } else {
            AdType::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdResource {
    pub entry: CdxEntry,
    pub service: Service,
    pub ad_type: AdType,
    pub visible: bool,
}

/// Host patterns per service. A leading `*.` matches any subdomain.
pub const SERVICE_HOSTS: &[(&str, Service)] = &[
    ("s0.2mdn.net", Service::GoogleDisplay),
    ("*.safeframe.googlesyndication.com", Service::GoogleSafeframe),
    ("securepubads.g.doubleclick.net", Service::GoogleDisplay),
    ("*.amazon-adsystem.com", Service::Amazon),
    ("cdn.flashtalking.com", Service::Flashtalking),
    ("s-static.innovid.com", Service::Innovid),
];

/// File names of tracking images that never render anything useful.
pub const INVISIBLE_NAMES: &[&str] = &[
    "pixel.gif",
    "pixel.png",
    "pixel.jpg",
    "1x1.gif",
    "1x1.png",
    "spacer.gif",
    "blank.gif",
    "clear.gif",
    "transparent.gif",
];

/// Images at most this many pixels wide and high are treated as invisible.
pub const INVISIBLE_MAX_PX: usize = 2;

fn host_matches(pattern: &str, host: &str) -> bool {
    match pattern.strip_prefix("*.") {
        Some(suffix) => host.len() > suffix.len() && host.ends_with(suffix) && host[..host.len() - suffix.len()].ends_with('.'),
        None => host == pattern,
    }
}

fn host_of(url: &str) -> Option<String> {
    parse_http_url(url).ok()?.host_str().map(|h| h.to_ascii_lowercase())
}

pub fn service_for_host(host: &str) -> Service {
    let host = host.to_ascii_lowercase();
    SERVICE_HOSTS
        .iter()
        .find(|(p, _)| host_matches(p, &host))
        .map(|(_, s)| *s)
        .unwrap_or(Service::Unknown)
}

pub fn service_for_url(url: &str) -> Service {
    host_of(url).map_or(Service::Unknown, |h| service_for_host(&h))
}

fn last_segment(url: &str) -> String {
    let path = match parse_http_url(url) {
        Ok(u) => u.path().to_string(),
        Err(_) => url.split(['?', '#']).next().unwrap_or("").to_string(),
    };
    path.rsplit('/').next().unwrap_or("").to_ascii_lowercase()
}

/// True for deny-listed names, and for images whose header declares both
/// dimensions at or below [`INVISIBLE_MAX_PX`].
pub fn is_invisible(url: &str, mime: &str, payload: Option<&[u8]>) -> bool {
    if INVISIBLE_NAMES.contains(&last_segment(url).as_str()) {
        return true;
    }
    if AdType::from_mime(mime) != AdType::Image {
        return false;
    }
    payload
        .and_then(|p| imagesize::blob_size(p).ok())
        .is_some_and(|d| d.width <= INVISIBLE_MAX_PX && d.height <= INVISIBLE_MAX_PX)
}

/// Classification from the index row alone.
pub fn classify_resource(entry: &CdxEntry) -> AdResource {
    classify_with_payload(entry, None)
}

/// Classification that also reads image dimensions from `payload` headers.
pub fn classify_with_payload(entry: &CdxEntry, payload: Option<&[u8]>) -> AdResource {
    AdResource {
        entry: entry.clone(),
        service: service_for_url(&entry.original_uri),
        ad_type: AdType::from_mime(&entry.mime),
        visible: !is_invisible(&entry.original_uri, &entry.mime, payload),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    AdFileName,
    AdDirectoryName,
    AdServiceHost,
    NotBlocked,
}

impl BlockReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlockReason::AdFileName => "ad_file_name",
            BlockReason::AdDirectoryName => "ad_directory_name",
            BlockReason::AdServiceHost => "ad_service_host",
            BlockReason::NotBlocked => "not_blocked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockVerdict {
    pub url: String,
    pub blocked: bool,
    pub reason: BlockReason,
    pub matched_token: String,
}

impl BlockVerdict {
    fn new(url: &str, reason: BlockReason, token: &str) -> Self {
        Self {
            url: url.to_string(),
            blocked: reason != BlockReason::NotBlocked,
            reason,
            matched_token: token.to_string(),
        }
    }
}

/// Token tables for the blocklist simulator. Tokens are compared
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpnRules {
    /// Matched against the file stem; the name must carry an extension.
    pub file_tokens: Vec<String>,
    /// Matched against whole non-final path segments.
    pub directory_tokens: Vec<String>,
    /// Host patterns, `*.` prefix for subdomains.
    pub hosts: Vec<String>,
}

impl Default for SpnRules {
    fn default() -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            file_tokens: own(&["imgad", "displayads", "videoad", "webad"]),
            directory_tokens: own(&["advertisement_files", "displayads", "videoad", "webad", "ads"]),
            hosts: SERVICE_HOSTS.iter().map(|(h, _)| h.to_string()).collect(),
        }
    }
}

impl SpnRules {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn check(&self, url: &str) -> Result<BlockVerdict, CanonError> {
        let parsed = parse_http_url(url)?;
        let host = parsed.host_str().unwrap_or("").to_ascii_lowercase();
        if let Some(p) = self.hosts.iter().find(|p| host_matches(&p.to_ascii_lowercase(), &host)) {
            return Ok(BlockVerdict::new(url, BlockReason::AdServiceHost, p));
        }

        let segments: Vec<String> = parsed
            .path()
            .split('/')
            .skip(1)
            .map(|s| percent_decode(s).to_ascii_lowercase())
            .collect();
        let Some((file, dirs)) = segments.split_last() else {
            return Ok(BlockVerdict::new(url, BlockReason::NotBlocked, ""));
        };

        if let Some((stem, ext)) = file.split_once('.') {
            if !ext.is_empty() {
                if let Some(t) = self.file_tokens.iter().find(|t| t.eq_ignore_ascii_case(stem)) {
                    return Ok(BlockVerdict::new(url, BlockReason::AdFileName, t));
                }
            }
        }
        for dir in dirs {
            if let Some(t) = self.directory_tokens.iter().find(|t| t.eq_ignore_ascii_case(dir)) {
                return Ok(BlockVerdict::new(url, BlockReason::AdDirectoryName, t));
            }
        }
        Ok(BlockVerdict::new(url, BlockReason::NotBlocked, ""))
    }
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Some(Ok(v)) = s.get(i + 1..i + 3).map(|h| u8::from_str_radix(h, 16)) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// Verdict under the default token tables.
pub fn spn_block_check(url: &str) -> Result<BlockVerdict, CanonError> {
    SpnRules::default().check(url)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::canonicalize;

    fn entry(url: &str, mime: &str) -> CdxEntry {
        CdxEntry {
            key: canonicalize(url).unwrap(),
            timestamp: "20230101000000".parse().unwrap(),
            original_uri: url.to_string(),
            status: 200,
            mime: mime.to_string(),
            source_id: 0,
            offset: 0,
            length: 10,
            digest: "sha256:00".into(),
            revisit: false,
            unresolved: false,
        }
    }

    #[test]
    fn sadbundle_is_google_display_page() {
        let r = classify_resource(&entry("https://s0.2mdn.net/sadbundle/123/index.html", "text/html"));
        assert_eq!(r.service, Service::GoogleDisplay);
        assert_eq!(r.ad_type, AdType::EmbeddedWebPage);
        assert!(r.visible);
    }

    #[test]
    fn hosts() {
        assert_eq!(service_for_url("https://x.test/logo.png"), Service::Unknown);
        assert_eq!(
            service_for_url("https://e76308bcf1c30aa4c853507f4b382285.safeframe.googlesyndication.com/safeframe/1-0-40/html/container.html"),
            Service::GoogleSafeframe
        );
        assert_eq!(service_for_url("https://aax-us-east.amazon-adsystem.com/e/dtb/admi"), Service::Amazon);
        assert_eq!(service_for_url("https://amazon-adsystem.com/"), Service::Unknown);
        assert_eq!(service_for_url("https://evilamazon-adsystem.com/"), Service::Unknown);
    }

    #[test]
    fn pixel_by_name_and_by_size() {
        let r = classify_resource(&entry("https://h.test/pixel.gif", "image/gif"));
        assert!(!r.visible);
        // 1x1 GIF header.
        let gif = b"GIF89a\x01\x00\x01\x00\x80\x00\x00\xff\xff\xff\x00\x00\x00!\xf9\x04\x01\x00\x00\x00\x00,\x00\x00\x00\x00\x01\x00\x01\x00\x00\x02\x02D\x01\x00;";
        let r = classify_with_payload(&entry("https://h.test/t.gif", "image/gif"), Some(gif));
        assert!(!r.visible);
        let big = b"GIF89a\x2c\x01\xfa\x00\x80\x00\x00";
        let r = classify_with_payload(&entry("https://h.test/b.gif", "image/gif"), Some(big));
        assert!(r.visible);
    }

    #[test]
    fn spn_examples() {
        let cases = [
            ("https://savingads.github.io/files/temp/imgAd.jpg", BlockReason::AdFileName, "imgad"),
            ("https://treid003.github.io/displayAds.js", BlockReason::AdFileName, "displayads"),
            ("https://savingads.github.io/no_extension/imgAd", BlockReason::NotBlocked, ""),
            (
                "https://treid003.github.io/Advertisement_files/Block_Ads_By_Regular_Expression.html",
                BlockReason::AdDirectoryName,
                "advertisement_files",
            ),
            ("https://treid003.github.io/files/Block_Ads_By_Regular_Expression.html", BlockReason::NotBlocked, ""),
            ("https://www.instagram.com/videoAd/", BlockReason::AdDirectoryName, "videoad"),
            ("https://s0.2mdn.net/x.js", BlockReason::AdServiceHost, "s0.2mdn.net"),
        ];
        for (url, reason, token) in cases {
            let v = spn_block_check(url).unwrap();
            assert_eq!(v.reason, reason, "{url}");
            assert_eq!(v.matched_token, token, "{url}");
            assert_eq!(v.blocked, reason != BlockReason::NotBlocked);
        }
        assert!(spn_block_check("imgAd.jpg").is_err());
    }

    #[test]
    fn rules_from_toml() {
        let rules = SpnRules::from_toml("file_tokens = [\"promo\"]\ndirectory_tokens = []\nhosts = []\n").unwrap();
        assert!(rules.check("https://h.test/PROMO.png").unwrap().blocked);
        assert!(!rules.check("https://h.test/imgAd.jpg").unwrap().blocked);
    }
}
