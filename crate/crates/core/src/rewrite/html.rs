use std::cell::RefCell;
use std::rc::Rc;
use std::sync::LazyLock;

use encoding_rs::{Encoding, UTF_8};
use lol_html::html_content::{ContentType, Element};
use lol_html::{element, text, AsciiCompatibleEncoding, HtmlRewriter, Settings};
use regex::bytes::Regex;
use url::Url;

use super::{rewrite_css_text, RewriteContext, CONTEXT_BLOCK_ID};
use crate::urim::Modifier;

static META_CHARSET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)<meta[^>]*?charset\s*=\s*["']?\s*([a-z0-9_:.\-]+)"#).expect("valid regex")
});
static HEAD_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<head[\s>/]").expect("valid regex"));
static HTML_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<html[\s>/]").expect("valid regex"));

fn declared_charset(payload: &[u8]) -> Option<&'static Encoding> {
    let window = &payload[..payload.len().min(1024)];
    let caps = META_CHARSET.captures(window)?;
    Encoding::for_label(caps.get(1)?.as_bytes())
}

fn element_modifier(el: &Element) -> Modifier {
    match el.tag_name().as_str() {
        "script" => Modifier::Js,
        "img" => Modifier::Im,
        "iframe" | "frame" => Modifier::If,
        "link" => {
            let rel = el.get_attribute("rel").unwrap_or_default().to_ascii_lowercase();
            if rel.split_ascii_whitespace().any(|r| r == "stylesheet") {
                Modifier::Cs
            } else {
                Modifier::None
            }
        }
        _ => Modifier::None,
    }
}

fn rewrite_srcset(value: &str, ctx: &RewriteContext, base: &Url, modifier: Modifier) -> Option<String> {
    let mut changed = false;
    let parts: Vec<String> = value
        .split(',')
        .map(|candidate| {
            let trimmed = candidate.trim();
            let (url, descriptor) = match trimmed.split_once(char::is_whitespace) {
                Some((u, d)) => (u, Some(d.trim())),
                None => (trimmed, None),
            };
            match ctx.rewrite_url(url, base, modifier) {
                Some(new) => {
                    changed = true;
                    match descriptor {
                        Some(d) => format!("{new} {d}"),
                        None => new,
                    }
                }
                None => trimmed.to_string(),
            }
        })
        .collect();
    changed.then(|| parts.join(", "))
}

/// Rewrites URL-bearing attributes, inline styles and `<style>` blocks, and
/// injects the shim as the first child of `<head>` when the context asks for
/// it. `about:blank` iframes are left for the shim. Input that cannot be
/// processed is returned unchanged.
pub fn rewrite_html(payload: &[u8], ctx: &RewriteContext) -> Vec<u8> {
    let (input, encoding) = match declared_charset(payload) {
        Some(enc) => match AsciiCompatibleEncoding::new(enc) {
            Some(ascii) => (payload.to_vec(), ascii),
            None => {
                let (text, _, _) = enc.decode(payload);
                (text.into_owned().into_bytes(), AsciiCompatibleEncoding::utf_8())
            }
        },
        None => {
            let (text, _) = UTF_8.decode_without_bom_handling(payload);
            (text.into_owned().into_bytes(), AsciiCompatibleEncoding::utf_8())
        }
    };

    let marker = format!("id=\"{CONTEXT_BLOCK_ID}\"");
    let already_injected = payload.windows(marker.len()).any(|w| w == marker.as_bytes());
    let inject = ctx.inject_shim && !already_injected;
    let has_head = HEAD_TAG.is_match(&input);
    let has_html = HTML_TAG.is_match(&input);
    let injected = Rc::new(RefCell::new(false));
    let base = Rc::new(RefCell::new(ctx.base_urir.clone()));
    let style_buf = Rc::new(RefCell::new(String::new()));
    let shim = ctx.shim_markup();

    let mut handlers = vec![
        element!("*", {
            let base = base.clone();
            move |el| {
                if el.tag_name() == "base" {
                    if let Some(href) = el.get_attribute("href") {
                        let joined = base.borrow().join(href.trim()).ok();
                        if let Some(new_base) = joined {
                            *base.borrow_mut() = new_base;
                        }
                    }
                }
                let base = base.borrow().clone();
                rewrite_element(el, ctx, &base)
            }
        }),
        text!("style", {
            let base = base.clone();
            let buf = style_buf.clone();
            move |chunk| {
                buf.borrow_mut().push_str(chunk.as_str());
                if chunk.last_in_text_node() {
                    let css = std::mem::take(&mut *buf.borrow_mut());
                    let out = rewrite_css_text(&css, ctx, &base.borrow());
                    chunk.replace(&out, ContentType::Html);
                } else {
                    chunk.remove();
                }
                Ok(())
            }
        }),
    ];
    if inject && has_head {
        let injected = injected.clone();
        let shim = shim.clone();
        handlers.push(element!("head", move |el| {
            if !*injected.borrow() {
                el.prepend(&shim, ContentType::Html);
                *injected.borrow_mut() = true;
            }
            Ok(())
        }));
    } else if inject && has_html {
        let injected = injected.clone();
        let shim = format!("<head>{shim}</head>");
        handlers.push(element!("html", move |el| {
            if !*injected.borrow() {
                el.prepend(&shim, ContentType::Html);
                *injected.borrow_mut() = true;
            }
            Ok(())
        }));
    }

    let mut output = Vec::with_capacity(input.len() + 512);
    let result = {
        let mut rewriter = HtmlRewriter::new(
            Settings {
                element_content_handlers: handlers,
                encoding,
                ..Settings::new()
            },
            |c: &[u8]| output.extend_from_slice(c),
        );
        rewriter.write(&input).and_then(|_| rewriter.end())
    };
    if result.is_err() {
        return payload.to_vec();
    }
    if inject && !*injected.borrow() {
        let mut with_shim = shim.into_bytes();
        with_shim.extend_from_slice(&output);
        return with_shim;
    }
    output
}

fn rewrite_element(
    el: &mut Element,
    ctx: &RewriteContext,
    base: &Url,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let tag = el.tag_name();
    let modifier = element_modifier(el);
    let mut touched = false;

    let mut url_attrs: Vec<&str> = vec!["src", "href", "action", "poster", "background"];
    if tag == "object" {
        url_attrs.push("data");
    }
    for attr in url_attrs {
        let Some(value) = el.get_attribute(attr) else {
            continue;
        };
        if let Some(new) = ctx.rewrite_url(&value, base, modifier) {
            el.set_attribute(attr, &new)?;
            touched = true;
        }
    }
    if let Some(value) = el.get_attribute("srcset") {
        if let Some(new) = rewrite_srcset(&value, ctx, base, modifier) {
            el.set_attribute("srcset", &new)?;
            touched = true;
        }
    }
    if let Some(style) = el.get_attribute("style") {
        let new = rewrite_css_text(&style, ctx, base);
        if new != style {
            el.set_attribute("style", &new)?;
        }
    }
    // Subresource integrity no longer holds once a payload is rewritten.
    if touched && matches!(tag.as_str(), "script" | "link") {
        el.remove_attribute("integrity");
    }
    Ok(())
}
