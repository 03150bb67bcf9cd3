//! Server-side rewriting of archived HTML and CSS so every reference points
//! back into the archive.
//!
//! URLs generated by scripts at run time are not touched here; those reach
//! the server as-is and are handled by fuzzy matching and the client shim.

mod css;
mod html;

use serde::Serialize;
use url::Url;

use crate::timestamp::Timestamp14;
use crate::urim::{parse_urim, Modifier};

pub use css::{rewrite_css, rewrite_css_text};
pub use html::rewrite_html;

/// Id of the inline JSON block carrying replay context for the shim.
pub const CONTEXT_BLOCK_ID: &str = "wb-context";

/// Default path the shim script is served from.
pub const DEFAULT_SHIM_SRC: &str = "/_shim/shim.js";

#[derive(Debug, Clone)]
pub struct RewriteContext {
    pub replay_base: String,
    pub timestamp: Timestamp14,
    /// Epoch seconds of `timestamp`, decimal.
    pub wombat_sec: String,
    pub base_urir: Url,
    pub inject_shim: bool,
    pub shim_src: String,
}

#[derive(Serialize)]
struct ContextBlock<'a> {
    timestamp14: String,
    wombat_sec: &'a str,
    replay_base: &'a str,
}

impl RewriteContext {
    pub fn new(replay_base: &str, timestamp: Timestamp14, base_urir: Url) -> Self {
        Self {
            replay_base: replay_base.to_string(),
            timestamp,
            wombat_sec: timestamp.epoch_seconds().to_string(),
            base_urir,
            inject_shim: true,
            shim_src: DEFAULT_SHIM_SRC.to_string(),
        }
    }

    pub fn without_shim(mut self) -> Self {
        self.inject_shim = false;
        self
    }

    /// Rewrites one reference found in a document based at `base`. Returns
    /// `None` when the value must be left alone.
    pub fn rewrite_url(&self, raw: &str, base: &Url, modifier: Modifier) -> Option<String> {
        let value = raw.trim();
        if value.is_empty() || value.starts_with('#') || value == self.shim_src {
            return None;
        }
        let lower = value.to_ascii_lowercase();
        const OPAQUE: [&str; 6] = ["data:", "about:", "javascript:", "blob:", "mailto:", "tel:"];
        if OPAQUE.iter().any(|p| lower.starts_with(p)) {
            return None;
        }
        if parse_urim(&self.replay_base, value).is_ok() {
            return None;
        }
        let resolved = base.join(value).ok()?;
        if !matches!(resolved.scheme(), "http" | "https") {
            return None;
        }
        Some(format!(
            "{}{}{}/{}",
            self.replay_base,
            self.timestamp,
            modifier.token(),
            resolved
        ))
    }

    /// Markup inserted as the first child of `<head>`: the context block
    /// followed by the shim script.
    pub fn shim_markup(&self) -> String {
        let block = ContextBlock {
            timestamp14: self.timestamp.to_string(),
            wombat_sec: &self.wombat_sec,
            replay_base: &self.replay_base,
        };
        let json = serde_json::to_string(&block)
            .expect("context block serializes")
            .replace("</", "<\\/");
        format!(
            "<script id=\"{CONTEXT_BLOCK_ID}\" type=\"application/json\">{json}</script>\
             <script src=\"{}\"></script>",
            self.shim_src
        )
    }
}
