use std::sync::LazyLock;

use regex::bytes::{Captures, Regex};
use url::Url;

use super::RewriteContext;
use crate::urim::Modifier;

// Group 1/2: quoted @import target. Group 3/4/5: url() argument.
static CSS_REF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?i)@import\s*(?:"([^"]*)"|'([^']*)')|url\(\s*(?:"([^"]*)"|'([^']*)'|([^"'\s)]*))\s*\)"#,
    )
    .expect("valid regex")
});

static IMPORT_TAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)@import\s*$").expect("valid regex"));

/// Rewrites `url(...)` references (as `im_`) and `@import` targets (as
/// `cs_`) in a stylesheet. Bytes outside the references are untouched.
pub fn rewrite_css(payload: &[u8], ctx: &RewriteContext) -> Vec<u8> {
    rewrite_css_bytes(payload, ctx, &ctx.base_urir)
}

/// Same as [`rewrite_css`] for CSS embedded in a document based at `base`.
pub fn rewrite_css_text(text: &str, ctx: &RewriteContext, base: &Url) -> String {
    String::from_utf8(rewrite_css_bytes(text.as_bytes(), ctx, base))
        .expect("rewriting only substitutes ASCII into UTF-8 input")
}

fn rewrite_css_bytes(payload: &[u8], ctx: &RewriteContext, base: &Url) -> Vec<u8> {
    CSS_REF
        .replace_all(payload, |caps: &Captures| {
            let whole = caps.get(0).expect("group 0");
            let (group, modifier) = if let Some(g) = caps.get(1).or_else(|| caps.get(2)) {
                (g, Modifier::Cs)
            } else {
                let g = caps.get(3).or_else(|| caps.get(4)).or_else(|| caps.get(5));
                let before = &payload[whole.start().saturating_sub(64)..whole.start()];
                let modifier = if IMPORT_TAIL.is_match(before) {
                    Modifier::Cs
                } else {
                    Modifier::Im
                };
                match g {
                    Some(g) => (g, modifier),
                    None => return whole.as_bytes().to_vec(),
                }
            };
            let raw = String::from_utf8_lossy(group.as_bytes());
            match ctx.rewrite_url(&raw, base, modifier) {
                Some(new) => {
                    let mut out = Vec::with_capacity(whole.len() + new.len());
                    out.extend_from_slice(&payload[whole.start()..group.start()]);
                    out.extend_from_slice(new.as_bytes());
                    out.extend_from_slice(&payload[group.end()..whole.end()]);
                    out
                }
                None => whole.as_bytes().to_vec(),
            }
        })
        .into_owned()
}
