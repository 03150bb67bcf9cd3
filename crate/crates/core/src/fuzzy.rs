//! Resolution of requests that miss the exact index.
//!
//! Ad scripts build some URLs from values generated at run time, so the
//! URL requested during replay rarely equals the one captured. Each rule
//! here removes one such volatile component:
//!
//! * `safeframe`: the random 32-hex subdomain of Google SafeFrame hosts.
//! * `amazon_rnd`: the `rnd` query parameter of Amazon ad iframes.
//! * `richload`: Flashtalking requests a Richload URL without the ad id;
//!   the id is recovered from the referring ad page.
//! * `generic`: the whole query string, as a last resort.
//!
//! When several captures match, the pick is deterministic, so sibling ad
//! iframes that differ only in volatile components may all show the same
//! capture.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::canon::{canonical_key, join_query, parse_http_url, query_pairs, CanonError};
use crate::index::{nearest, CaptureIndex, CdxEntry};
use crate::timestamp::Timestamp14;

pub const BUILTIN_RULES: &str = include_str!("../rules/builtin.toml");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("rule {0} does not apply to this URL")]
    RuleNotApplicable(String),
    #[error("referrer has no numeric ad id path segment")]
    NoAdIdInReferrer,
    #[error(transparent)]
    Canon(#[from] CanonError),
}

#[derive(Debug, Error)]
pub enum RuleConfigError {
    #[error("rule config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule {rule}: bad {field} pattern: {source}")]
    Pattern {
        rule: String,
        field: &'static str,
        source: regex::Error,
    },
    #[error("duplicate rule name {0}")]
    DuplicateName(String),
    #[error("rules {0} and {1} share priority {2}")]
    DuplicatePriority(String, String, i64),
    #[error("reading rule config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error("no capture matches {}", .0.requested_urir)]
    NotFound(MissReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum Transform {
    RandomSubdomain,
    DropParam { param: String },
    AdIdPath { token: String },
    StripQuery,
}

/// What a rule asks the index for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchSpec {
    /// Captures whose own alternate key (under the same rule) equals this.
    AltKey(String),
    /// Captures under `host_prefix` whose path has `segment` as a whole
    /// segment and contains `token` case-insensitively.
    PathSegments {
        host_prefix: String,
        segment: String,
        token: String,
    },
}

#[derive(Debug, Clone)]
pub struct FuzzyRule {
    pub name: String,
    pub priority: i64,
    pub host: Option<Regex>,
    pub path: Option<Regex>,
    pub transform: Transform,
}

#[derive(Deserialize)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<RuleEntry>,
}

#[derive(Deserialize)]
struct RuleEntry {
    name: String,
    priority: i64,
    host: Option<String>,
    path: Option<String>,
    #[serde(flatten)]
    transform: Transform,
}

fn compile(rule: &str, field: &'static str, pattern: Option<String>) -> Result<Option<Regex>, RuleConfigError> {
    pattern
        .map(|p| {
            Regex::new(&p).map_err(|source| RuleConfigError::Pattern {
                rule: rule.to_string(),
                field,
                source,
            })
        })
        .transpose()
}

impl FuzzyRule {
    fn matches_shape(&self, url: &Url) -> bool {
        let host = url.host_str().unwrap_or("").to_ascii_lowercase();
        self.host.as_ref().is_none_or(|re| re.is_match(&host))
            && self.path.as_ref().is_none_or(|re| re.is_match(url.path()))
    }

    fn not_applicable(&self) -> RuleError {
        RuleError::RuleNotApplicable(self.name.clone())
    }

    /// Alternate key for `url`, for the key-transforming rules.
    pub fn alternate_key(&self, url: &str) -> Result<String, RuleError> {
        let parsed = parse_http_url(url)?;
        if !self.matches_shape(&parsed) {
            return Err(self.not_applicable());
        }
        let key = canonical_key(&parsed);
        match &self.transform {
            Transform::RandomSubdomain => {
                let (label, rest) = key.split_once('.').ok_or_else(|| self.not_applicable())?;
                if label.is_empty() || !rest.contains('.') {
                    return Err(self.not_applicable());
                }
                Ok(format!("*.{rest}"))
            }
            Transform::DropParam { param } => {
                let (base, query) = key.split_once('?').ok_or_else(|| self.not_applicable())?;
                let pairs = query_pairs(query);
                if !pairs.iter().any(|(k, _)| k == param) {
                    return Err(self.not_applicable());
                }
                let kept: Vec<_> = pairs.into_iter().filter(|(k, _)| k != param).collect();
                let query = join_query(&kept);
                Ok(if query.is_empty() {
                    base.to_string()
                } else {
                    format!("{base}?{query}")
                })
            }
            Transform::StripQuery => match key.split_once('?') {
                Some((base, _)) => Ok(base.to_string()),
                None => Err(self.not_applicable()),
            },
            Transform::AdIdPath { .. } => Err(self.not_applicable()),
        }
    }

    /// Key under which a capture is bucketed for this rule. Query stripping
    /// also buckets captures that never had a query.
    fn capture_key(&self, url: &str) -> Option<String> {
        match &self.transform {
            Transform::StripQuery => {
                let parsed = parse_http_url(url).ok()?;
                if !self.matches_shape(&parsed) {
                    return None;
                }
                let key = canonical_key(&parsed);
                Some(key.split('?').next().unwrap_or(&key).to_string())
            }
            Transform::AdIdPath { .. } => None,
            _ => self.alternate_key(url).ok(),
        }
    }

    /// Search specification for a request that missed exact lookup.
    pub fn derive(&self, url: &str, referrer: Option<&str>) -> Result<SearchSpec, RuleError> {
        match &self.transform {
            Transform::AdIdPath { token } => {
                let parsed = parse_http_url(url)?;
                if !self.matches_shape(&parsed) {
                    return Err(self.not_applicable());
                }
                let token = token.to_ascii_lowercase();
                if !parsed.path().to_ascii_lowercase().contains(&token) {
                    return Err(self.not_applicable());
                }
                let referrer = referrer
                    .and_then(|r| Url::parse(r).ok())
                    .ok_or(RuleError::NoAdIdInReferrer)?;
                let segment = referrer
                    .path_segments()
                    .into_iter()
                    .flatten()
                    .find(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                    .ok_or(RuleError::NoAdIdInReferrer)?
                    .to_string();
                let host = canonical_key(&parsed);
                let host = host.split('/').next().unwrap_or("");
                Ok(SearchSpec::PathSegments {
                    host_prefix: format!("{host}/"),
                    segment,
                    token,
                })
            }
            _ => self.alternate_key(url).map(SearchSpec::AltKey),
        }
    }
}

/// Ordered rule table.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<FuzzyRule>,
}

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_RULES).expect("built-in rules are valid")
    }

    pub fn load(path: &Path) -> Result<Self, RuleConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, RuleConfigError> {
        let file: RuleFile = toml::from_str(text)?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for entry in file.rule {
            let host = compile(&entry.name, "host", entry.host)?;
            let path = compile(&entry.name, "path", entry.path)?;
            rules.push(FuzzyRule {
                name: entry.name,
                priority: entry.priority,
                host,
                path,
                transform: entry.transform,
            });
        }
        Self::new(rules)
    }

    pub fn new(mut rules: Vec<FuzzyRule>) -> Result<Self, RuleConfigError> {
        let mut names = HashSet::new();
        for r in &rules {
            if r.name == "exact" || !names.insert(r.name.clone()) {
                return Err(RuleConfigError::DuplicateName(r.name.clone()));
            }
        }
        rules.sort_by_key(|r| r.priority);
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(RuleConfigError::DuplicatePriority(
                    pair[0].name.clone(),
                    pair[1].name.clone(),
                    pair[0].priority,
                ));
            }
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&FuzzyRule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn builtin_rule(name: &str) -> FuzzyRule {
    RuleSet::builtin()
        .rule(name)
        .cloned()
        .expect("built-in rule exists")
}

/// Alternate key shared by all SafeFrame URLs with the same path.
pub fn normalize_safeframe(url: &str) -> Result<String, RuleError> {
    builtin_rule("safeframe").alternate_key(url)
}

/// Canonical key with the `rnd` parameter removed.
pub fn normalize_amazon_rnd(url: &str) -> Result<String, RuleError> {
    builtin_rule("amazon_rnd").alternate_key(url)
}

pub fn resolve_richload(url: &str, referrer: Option<&str>) -> Result<SearchSpec, RuleError> {
    builtin_rule("richload").derive(url, referrer)
}

/// Canonical key with the query removed.
pub fn generic_query_fuzzy(url: &str) -> Result<String, RuleError> {
    builtin_rule("generic").alternate_key(url)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub entry: CdxEntry,
    /// `"exact"` or the name of the rule that matched.
    pub rule_used: String,
    pub candidates_considered: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAttempt {
    pub rule: String,
    pub candidates: usize,
}

/// Why a request could not be served. Rules that did not apply to the
/// request are not listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissReport {
    pub requested_urir: String,
    pub ts: String,
    pub rules_tried: Vec<RuleAttempt>,
    pub nearest_keys: Vec<String>,
}

/// An index together with per-rule buckets of alternate keys.
#[derive(Debug, Clone)]
pub struct FuzzyMatcher {
    index: CaptureIndex,
    rules: RuleSet,
    buckets: Vec<HashMap<String, Vec<usize>>>,
}

impl FuzzyMatcher {
    pub fn new(index: CaptureIndex, rules: RuleSet) -> Self {
        let buckets = rules
            .rules()
            .iter()
            .map(|rule| {
                let mut map: HashMap<String, Vec<usize>> = HashMap::new();
                for (i, e) in index.entries().iter().enumerate() {
                    if let Some(k) = rule.capture_key(&e.original_uri) {
                        map.entry(k).or_default().push(i);
                    }
                }
                map
            })
            .collect();
        Self {
            index,
            rules,
            buckets,
        }
    }

    pub fn index(&self) -> &CaptureIndex {
        &self.index
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    fn candidates(&self, rule_idx: usize, spec: &SearchSpec) -> Vec<&CdxEntry> {
        match spec {
            SearchSpec::AltKey(key) => self.buckets[rule_idx]
                .get(key)
                .map(|ids| ids.iter().map(|&i| &self.index.entries()[i]).collect())
                .unwrap_or_default(),
            SearchSpec::PathSegments {
                host_prefix,
                segment,
                token,
            } => self
                .index
                .entries_with_key_prefix(host_prefix)
                .iter()
                .filter(|e| {
                    let path = e.key.as_str()[host_prefix.len() - 1..]
                        .split('?')
                        .next()
                        .unwrap_or("");
                    path.split('/').any(|s| s == segment)
                        && path.to_ascii_lowercase().contains(token.as_str())
                })
                .collect(),
        }
    }

    /// Exact lookup first, then each applicable rule in priority order. The
    /// first rule with at least one candidate decides.
    pub fn resolve(
        &self,
        url: &str,
        ts: Timestamp14,
        referrer: Option<&str>,
    ) -> Result<Resolution, ResolveError> {
        let key = crate::canon::canonicalize(url)?;
        let exact = self.index.entries_for_key(key.as_str());
        if let Some(entry) = nearest(exact, ts) {
            return Ok(Resolution {
                entry: entry.clone(),
                rule_used: "exact".into(),
                candidates_considered: exact.len(),
            });
        }
        let mut tried = vec![RuleAttempt {
            rule: "exact".into(),
            candidates: 0,
        }];
        for (i, rule) in self.rules.rules().iter().enumerate() {
            let Ok(spec) = rule.derive(url, referrer) else {
                continue;
            };
            let candidates = self.candidates(i, &spec);
            tried.push(RuleAttempt {
                rule: rule.name.clone(),
                candidates: candidates.len(),
            });
            let count = candidates.len();
            if let Some(entry) = nearest(candidates, ts) {
                return Ok(Resolution {
                    entry: entry.clone(),
                    rule_used: rule.name.clone(),
                    candidates_considered: count,
                });
            }
        }
        Err(ResolveError::NotFound(MissReport {
            requested_urir: url.to_string(),
            ts: ts.to_string(),
            rules_tried: tried,
            nearest_keys: self.index.neighbor_keys(key.as_str(), 5),
        }))
    }
}

/// Resolves `url` at `ts` against the matcher's index.
pub fn resolve(
    matcher: &FuzzyMatcher,
    url: &str,
    ts: Timestamp14,
    referrer: Option<&str>,
) -> Result<Resolution, ResolveError> {
    matcher.resolve(url, ts, referrer)
}
