use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid 14-digit timestamp: {0:?}")]
pub struct InvalidTimestamp(pub String);

/// A capture datetime in the `YYYYMMDDHHMMSS` form used by CDX indexes and
/// memento URLs. Always UTC, second precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp14 {
    epoch: i64,
}

impl Timestamp14 {
    pub fn parse(text: &str) -> Result<Self, InvalidTimestamp> {
        if text.len() != 14 || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InvalidTimestamp(text.to_string()));
        }
        let naive = NaiveDateTime::parse_from_str(text, "%Y%m%d%H%M%S")
            .map_err(|_| InvalidTimestamp(text.to_string()))?;
        Ok(Self {
            epoch: naive.and_utc().timestamp(),
        })
    }

    /// Truncates sub-second precision.
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Self {
            epoch: dt.timestamp(),
        }
    }

    /// Fails for instants outside years 0000..=9999, which have no 14-digit form.
    pub fn from_epoch(epoch: i64) -> Result<Self, InvalidTimestamp> {
        let dt = Utc
            .timestamp_opt(epoch, 0)
            .single()
            .ok_or_else(|| InvalidTimestamp(epoch.to_string()))?;
        let year = chrono::Datelike::year(&dt);
        if !(0..=9999).contains(&year) {
            return Err(InvalidTimestamp(epoch.to_string()));
        }
        Ok(Self { epoch })
    }

    pub fn epoch_seconds(&self) -> i64 {
        self.epoch
    }

    pub fn to_datetime(&self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.epoch, 0)
            .single()
            .expect("validated at construction")
    }

    /// `Tue, 22 Aug 2023 16:15:44 GMT`, as used by `Memento-Datetime`.
    pub fn to_http_date(&self) -> String {
        self.to_datetime()
            .format("%a, %d %b %Y %H:%M:%S GMT")
            .to_string()
    }

    pub fn abs_diff(&self, other: &Timestamp14) -> u64 {
        self.epoch.abs_diff(other.epoch)
    }
}

impl fmt::Display for Timestamp14 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y%m%d%H%M%S"))
    }
}

impl FromStr for Timestamp14 {
    type Err = InvalidTimestamp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Timestamp14 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp14 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}
