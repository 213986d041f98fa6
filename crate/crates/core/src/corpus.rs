//! Search-result summaries behind a provider interface.
//!
//! The canonical backend is [`SnapshotProvider`], a JSON-lines file of
//! `{query, rank, text}` records replayed verbatim. [`HttpProvider`] talks to
//! any endpoint returning ranked text snippets.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::{InstancePair, Pattern};

/// Number of summaries fetched per query unless configured otherwise.
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed snapshot {path} line {line}: {message}")]
    MalformedSnapshot {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("empty entity in instance pair")]
    EmptyEntity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    InstanceQuery,
    PatternQuery,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    text: String,
    kind: QueryKind,
    top_k: usize,
}

impl Query {
    pub fn new(
        text: impl Into<String>,
        kind: QueryKind,
        top_k: usize,
    ) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::InvalidQuery("query text is empty"));
        }
        if top_k == 0 {
            return Err(CorpusError::InvalidQuery("top_k must be at least 1"));
        }
        Ok(Self { text, kind, top_k })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> QueryKind {
        self.kind
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }
}

/// One search result as fetched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub query_text: String,
    pub rank: u32,
    pub raw_text: String,
}

/// `e1 e2`, joined by one space.
pub fn build_instance_query(pair: &InstancePair, top_k: usize) -> Result<Query, CorpusError> {
    let (e1, e2) = (pair.e1.trim(), pair.e2.trim());
    if e1.is_empty() || e2.is_empty() {
        return Err(CorpusError::EmptyEntity);
    }
    Query::new(format!("{e1} {e2}"), QueryKind::InstanceQuery, top_k)
}

/// `+prefix+*+middle+*+`, or `None` when the pattern lacks a prefix or a middle.
pub fn build_pattern_query(pattern: &Pattern, top_k: usize) -> Option<Query> {
    let prefix = pattern.prefix.as_ref()?;
    let middle = pattern.middle.as_ref()?;
    let mut text = String::from("+");
    for word in prefix {
        text.push_str(word);
        text.push('+');
    }
    text.push_str("*+");
    for word in middle {
        text.push_str(word);
        text.push('+');
    }
    text.push_str("*+");
    Query::new(text, QueryKind::PatternQuery, top_k).ok()
}

/// Anything that answers queries with ranked summaries.
pub trait SearchProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Returns at most `query.top_k()` summaries ranked from 1. No results is
    /// an empty list, not an error.
    fn fetch(&self, query: &Query) -> Result<Vec<Summary>, CorpusError>;
}

/// One line of a snapshot file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub query: String,
    pub rank: u32,
    pub text: String,
}

/// Optional first line of a snapshot file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotMetadata {
    pub provider: String,
    #[serde(default)]
    pub captured: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataLine {
    meta: SnapshotMetadata,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotStore {
    entries: BTreeMap<String, Vec<String>>,
    metadata: SnapshotMetadata,
}

impl SnapshotStore {
    pub fn new(metadata: SnapshotMetadata) -> Self {
        Self {
            entries: BTreeMap::new(),
            metadata,
        }
    }

    pub fn metadata(&self) -> &SnapshotMetadata {
        &self.metadata
    }

    /// Appends a summary to the end of a query's list.
    pub fn push(&mut self, query: impl Into<String>, text: impl Into<String>) {
        self.entries
            .entry(query.into())
            .or_default()
            .push(text.into());
    }

    pub fn get(&self, query: &str) -> &[String] {
        self.entries.get(query).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = SnapshotRecord> + '_ {
        self.entries.iter().flat_map(|(query, texts)| {
            texts
                .iter()
                .enumerate()
                .map(move |(i, text)| SnapshotRecord {
                    query: query.clone(),
                    rank: i as u32 + 1,
                    text: text.clone(),
                })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CorpusError::ProviderUnavailable(format!(
                "cannot read snapshot {}: {e}",
                path.display()
            ))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates JSON-lines snapshot text. Records may appear in
    /// any order; each query's summaries are ordered by rank, and ranks must
    /// be unique per query.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CorpusError> {
        let malformed = |line: usize, message: String| CorpusError::MalformedSnapshot {
            path: origin.to_string(),
            line,
            message,
        };
        let mut metadata = SnapshotMetadata::default();
        let mut ranked: BTreeMap<String, BTreeMap<u32, String>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if idx == 0 {
                if let Ok(meta) = serde_json::from_str::<MetadataLine>(line) {
                    metadata = meta.meta;
                    continue;
                }
            }
            let record: SnapshotRecord =
                serde_json::from_str(line).map_err(|e| malformed(lineno, e.to_string()))?;
            if record.query.trim().is_empty() {
                return Err(malformed(lineno, "empty query".into()));
            }
            if record.rank == 0 {
                return Err(malformed(lineno, "rank must be at least 1".into()));
            }
            let slot = ranked.entry(record.query).or_default();
            if slot.insert(record.rank, record.text).is_some() {
                return Err(malformed(lineno, format!("duplicate rank {}", record.rank)));
            }
        }
        let entries = ranked
            .into_iter()
            .map(|(q, by_rank)| (q, by_rank.into_values().collect()))
            .collect();
        Ok(Self { entries, metadata })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.metadata != SnapshotMetadata::default() {
            let meta = serde_json::json!({ "meta": self.metadata });
            writeln!(out, "{meta}")?;
        }
        for record in self.records() {
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf)
    }
}

/// Replays a [`SnapshotStore`]. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SnapshotProvider {
    store: SnapshotStore,
}

impl SnapshotProvider {
    pub fn new(store: SnapshotStore) -> Self {
        Self { store }
    }

    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        SnapshotStore::load(path).map(Self::new)
    }

    pub fn store(&self) -> &SnapshotStore {
        &self.store
    }
}

impl SearchProvider for SnapshotProvider {
    fn name(&self) -> &str {
        "snapshot"
    }

    fn fetch(&self, query: &Query) -> Result<Vec<Summary>, CorpusError> {
        Ok(self
            .store
            .get(query.text())
            .iter()
            .take(query.top_k())
            .enumerate()
            .map(|(i, text)| Summary {
                query_text: query.text().to_string(),
                rank: i as u32 + 1,
                raw_text: text.clone(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub user_agent: String,
    pub timeout_ms: u64,
    #[serde(default)]
    pub proxy_host: Option<String>,
    #[serde(default)]
    pub proxy_port: Option<u16>,
    /// Minimum delay between two requests.
    #[serde(default)]
    pub min_interval_ms: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HttpResponse {
    Ranked { results: Vec<HttpResult> },
    Plain(Vec<String>),
}

#[derive(Deserialize)]
struct HttpResult {
    #[serde(default)]
    rank: Option<u32>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

/// Live backend: `GET {base_url}?q=<query>&num=<top_k>` returning either
/// `{"results": [{"rank", "title", "text"}]}` or a JSON array of strings.
/// Requests from one provider are serialized.
pub struct HttpProvider {
    agent: ureq::Agent,
    config: HttpConfig,
    last_request: Mutex<Option<Instant>>,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, CorpusError> {
        let mut builder = ureq::AgentBuilder::new()
            .user_agent(&config.user_agent)
            .timeout(Duration::from_millis(config.timeout_ms));
        if let Some(host) = &config.proxy_host {
            let port = config.proxy_port.unwrap_or(1080);
            let proxy = ureq::Proxy::new(format!("http://{host}:{port}"))
                .map_err(|e| CorpusError::ProviderUnavailable(format!("bad proxy: {e}")))?;
            builder = builder.proxy(proxy);
        }
        Ok(Self {
            agent: builder.build(),
            config,
            last_request: Mutex::new(None),
        })
    }
}

impl SearchProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn fetch(&self, query: &Query) -> Result<Vec<Summary>, CorpusError> {
        let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(at) = *last {
            let wait = Duration::from_millis(self.config.min_interval_ms);
            let elapsed = at.elapsed();
            if elapsed < wait {
                std::thread::sleep(wait - elapsed);
            }
        }
        let response = self
            .agent
            .get(&self.config.base_url)
            .query("q", query.text())
            .query("num", &query.top_k().to_string())
            .call();
        *last = Some(Instant::now());
        let body: HttpResponse = response
            .map_err(|e| CorpusError::ProviderUnavailable(e.to_string()))?
            .into_json()
            .map_err(|e| CorpusError::ProviderUnavailable(format!("bad response body: {e}")))?;
        drop(last);

        let texts: Vec<String> = match body {
            HttpResponse::Plain(texts) => texts,
            HttpResponse::Ranked { mut results } => {
                results.sort_by_key(|r| r.rank.unwrap_or(u32::MAX));
                results
                    .into_iter()
                    .map(|r| match (r.title, r.text) {
                        (Some(t), Some(b)) => format!("{t}\n{b}"),
                        (Some(t), None) => t,
                        (None, Some(b)) => b,
                        (None, None) => String::new(),
                    })
                    .collect()
            }
        };
        Ok(texts
            .into_iter()
            .take(query.top_k())
            .enumerate()
            .map(|(i, raw_text)| Summary {
                query_text: query.text().to_string(),
                rank: i as u32 + 1,
                raw_text,
            })
            .collect())
    }
}
