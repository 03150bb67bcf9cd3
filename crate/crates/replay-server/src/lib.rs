//! HTTP replay of an indexed collection.
//!
//! Requests for `{replay_base}{timestamp}{modifier}/{URI-R}` are resolved
//! through exact lookup and the fuzzy rules, then served with HTML and CSS
//! rewritten back into the archive. The server holds no HTTP client: a miss
//! is reported, never fetched.

mod body;
mod memento;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use adreplay_core::fuzzy::RuleConfigError;
use adreplay_core::index::SourceReport;
use adreplay_core::rewrite::DEFAULT_SHIM_SRC;
use adreplay_core::warc::WarcError;
use adreplay_core::{build_index, ArchiveSource, FuzzyMatcher, RuleSet};
use axum::extract::{Query, State};
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use memento::MementoResponse;

#[derive(Debug)]
pub enum ConfigError {
    ReplayBase(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::ReplayBase(b) => write!(f, "replay base must start and end with '/': {b:?}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Path prefix for mementos, e.g. `/web/`.
    pub replay_base: String,
    /// File served at the shim path; `None` answers 404 there.
    pub shim_asset: Option<PathBuf>,
    pub inject_shim: bool,
    pub verbose: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            replay_base: "/web/".into(),
            shim_asset: None,
            inject_shim: true,
            verbose: false,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.replay_base;
        if b.len() < 2 || !b.starts_with('/') || !b.ends_with('/') {
            return Err(ConfigError::ReplayBase(b.clone()));
        }
        Ok(())
    }
}

/// An index with its fuzzy rules. Immutable once built.
#[derive(Debug)]
pub struct Collection {
    pub matcher: FuzzyMatcher,
}

impl Collection {
    pub fn empty() -> Self {
        Self::from_sources(Vec::new(), RuleSet::builtin()).0
    }

    pub fn from_sources(sources: Vec<ArchiveSource>, rules: RuleSet) -> (Self, Vec<SourceReport>) {
        let (index, reports) = build_index(sources);
        (
            Self {
                matcher: FuzzyMatcher::new(index, rules),
            },
            reports,
        )
    }

    /// Opens every path (WARC, gzip WARC or WACZ, told apart by content).
    pub fn open(paths: &[PathBuf], rules: RuleSet) -> Result<(Self, Vec<SourceReport>), WarcError> {
        let sources = paths
            .iter()
            .map(ArchiveSource::from_path)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_sources(sources, rules))
    }
}

pub fn load_rules(path: Option<&std::path::Path>) -> Result<RuleSet, RuleConfigError> {
    match path {
        Some(p) => RuleSet::load(p),
        None => Ok(RuleSet::builtin()),
    }
}

/// Shared server state. The collection can be swapped while serving;
/// requests already running keep the snapshot they started with.
#[derive(Debug)]
pub struct AppState {
    pub config: ServerConfig,
    collection: RwLock<Arc<Collection>>,
}

impl AppState {
    pub fn new(config: ServerConfig, collection: Collection) -> Arc<Self> {
        Arc::new(Self {
            config,
            collection: RwLock::new(Arc::new(collection)),
        })
    }

    pub fn snapshot(&self) -> Arc<Collection> {
        self.collection.read().expect("collection lock").clone()
    }

    pub fn swap(&self, collection: Collection) {
        *self.collection.write().expect("collection lock") = Arc::new(collection);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/search", get(search))
        .route(DEFAULT_SHIM_SRC, get(shim_asset))
        .fallback(memento_or_404)
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Health {
    pub entries: usize,
    pub sources: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let c = state.snapshot();
    let index = c.matcher.index();
    Json(Health {
        entries: index.len(),
        sources: index.sources().len(),
    })
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    prefix: Option<String>,
    mime: Option<String>,
}

/// One row of `/api/search` output.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SearchRow {
    pub urir: String,
    pub timestamp14: String,
    pub mime: String,
    pub status: u16,
}

fn json_error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn search(State(state): State<Arc<AppState>>, Query(params): Query<SearchParams>) -> Response {
    let Some(prefix) = params.prefix.filter(|p| !p.is_empty()) else {
        return json_error(StatusCode::BAD_REQUEST, "missing prefix");
    };
    // Keys ignore the scheme, so a bare host prefix is accepted.
    let prefix = if prefix.contains("://") { prefix } else { format!("http://{prefix}") };
    let mime = params.mime.filter(|m| !m.is_empty());
    let c = state.snapshot();
    match c.matcher.index().prefix_search(&prefix, mime.as_deref()) {
        Ok(hits) => {
            let rows: Vec<SearchRow> = hits
                .into_iter()
                .map(|e| SearchRow {
                    urir: e.original_uri.clone(),
                    timestamp14: e.timestamp.to_string(),
                    mime: e.mime.clone(),
                    status: e.status,
                })
                .collect();
            Json(rows).into_response()
        }
        Err(e) => json_error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn shim_asset(State(state): State<Arc<AppState>>) -> Response {
    let Some(path) = state.config.shim_asset.clone() else {
        return json_error(StatusCode::NOT_FOUND, "no shim asset configured");
    };
    match tokio::task::spawn_blocking(move || std::fs::read(path)).await {
        Ok(Ok(bytes)) => (
            [(header::CONTENT_TYPE, "application/javascript; charset=utf-8")],
            bytes,
        )
            .into_response(),
        _ => json_error(StatusCode::NOT_FOUND, "shim asset unreadable"),
    }
}

async fn memento_or_404(
    State(state): State<Arc<AppState>>,
    method: Method,
    uri: Uri,
    headers: axum::http::HeaderMap,
) -> Response {
    if method != Method::GET && method != Method::HEAD {
        return json_error(StatusCode::METHOD_NOT_ALLOWED, "only GET and HEAD are served");
    }
    let path_and_query = uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    if !path_and_query.starts_with(state.config.replay_base.as_str()) {
        return json_error(StatusCode::NOT_FOUND, "not a replay path");
    }
    let referer = headers
        .get(header::REFERER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let range = headers
        .get(header::RANGE)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let collection = state.snapshot();
    let config = state.config.clone();
    let target = path_and_query.to_string();
    let result = tokio::task::spawn_blocking(move || {
        memento::serve(&collection, &config, &target, referer.as_deref(), range.as_deref())
    })
    .await;
    let mut response = match result {
        Ok(r) => r.into_response(),
        Err(_) => json_error(StatusCode::INTERNAL_SERVER_ERROR, "replay task failed"),
    };
    if method == Method::HEAD {
        *response.body_mut() = axum::body::Body::empty();
    }
    response
}
