//! Memento URLs of the form `{replay_base}{YYYYMMDDHHMMSS}[{modifier}]/{URI-R}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timestamp::Timestamp14;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrimError {
    #[error("invalid timestamp {0:?}")]
    InvalidTimestamp(String),
    #[error("URI-R is not absolute: {0:?}")]
    RelativeUrir(String),
    #[error("not a URI-M: {0:?}")]
    NotAUriM(String),
    #[error("unknown modifier {0:?}")]
    UnknownModifier(String),
}

/// Replay modifier. `id_` serves raw bytes; the others pick how the
/// payload is rewritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Modifier {
    #[default]
    None,
    Js,
    Cs,
    Im,
    If,
    Id,
    Oe,
}

impl Modifier {
    pub const ALL: [Modifier; 7] = [
        Modifier::None,
        Modifier::Js,
        Modifier::Cs,
        Modifier::Im,
        Modifier::If,
        Modifier::Id,
        Modifier::Oe,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Modifier::None => "",
            Modifier::Js => "js_",
            Modifier::Cs => "cs_",
            Modifier::Im => "im_",
            Modifier::If => "if_",
            Modifier::Id => "id_",
            Modifier::Oe => "oe_",
        }
    }
}

impl FromStr for Modifier {
    type Err = UrimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modifier::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| UrimError::UnknownModifier(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UriM {
    pub replay_base: String,
    pub timestamp: Timestamp14,
    pub modifier: Modifier,
    pub urir: String,
}

impl UriM {
    pub fn new(
        replay_base: &str,
        urir: &str,
        timestamp: Timestamp14,
        modifier: Modifier,
    ) -> Result<Self, UrimError> {
        check_absolute(urir)?;
        Ok(Self {
            replay_base: replay_base.to_string(),
            timestamp,
            modifier,
            urir: urir.to_string(),
        })
    }
}

impl fmt::Display for UriM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}/{}",
            self.replay_base,
            self.timestamp,
            self.modifier.token(),
            self.urir
        )
    }
}

/// `scheme ":"` prefix per RFC 3986 followed by something.
fn check_absolute(urir: &str) -> Result<(), UrimError> {
    let relative = || UrimError::RelativeUrir(urir.to_string());
    let (scheme, rest) = urir.split_once(':').ok_or_else(relative)?;
    let mut chars = scheme.chars();
    let first_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    let rest_ok = chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    if !first_ok || !rest_ok || rest.is_empty() {
        return Err(relative());
    }
    Ok(())
}

pub fn make_urim(
    replay_base: &str,
    urir: &str,
    timestamp14: &str,
    modifier: Modifier,
) -> Result<String, UrimError> {
    let ts = Timestamp14::parse(timestamp14)
        .map_err(|_| UrimError::InvalidTimestamp(timestamp14.to_string()))?;
    Ok(UriM::new(replay_base, urir, ts, modifier)?.to_string())
}

pub fn parse_urim(replay_base: &str, text: &str) -> Result<UriM, UrimError> {
    let not_urim = || UrimError::NotAUriM(text.to_string());
    let rest = text.strip_prefix(replay_base).ok_or_else(not_urim)?;
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Err(not_urim());
    }
    let ts_text = &rest[..digits];
    let timestamp = Timestamp14::parse(ts_text)
        .map_err(|_| UrimError::InvalidTimestamp(ts_text.to_string()))?;
    let rest = &rest[digits..];
    let (modifier, urir) = rest.split_once('/').ok_or_else(not_urim)?;
    let modifier: Modifier = modifier.parse()?;
    check_absolute(urir)?;
    Ok(UriM {
        replay_base: replay_base.to_string(),
        timestamp,
        modifier,
        urir: urir.to_string(),
    })
}

/// Epoch seconds of a timestamp, as decimal text. This is the seed the
/// client shim feeds to its deterministic random generator.
pub fn compute_wombat_sec(timestamp14: &str) -> Result<String, UrimError> {
    let ts = Timestamp14::parse(timestamp14)
        .map_err(|_| UrimError::InvalidTimestamp(timestamp14.to_string()))?;
    Ok(ts.epoch_seconds().to_string())
}
