//! Run configuration files.
//!
//! ```toml
//! relation_label = "author-book"
//! seeds = "seeds.tsv"
//! threshold = 100
//! top_k = 20
//!
//! [provider]
//! kind = "snapshot"
//! path = "snapshot.jsonl"
//! ```
//!
//! Relative paths resolve against the config file's directory. `--set`
//! overrides replace top-level keys before the file is interpreted.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::bootstrap::RunConfig;
use crate::corpus::{
    CorpusError, HttpConfig, HttpProvider, SearchProvider, SnapshotProvider, DEFAULT_TOP_K,
};
use crate::extract::{EntityRules, DEFAULT_EXTENSION_PARTICLES};
use crate::patterns::{ContextCaps, InstancePair};
use crate::textproc::{NormalizationTable, TaMarbutaFolding};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown override key {0:?}")]
    UnknownOverride(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
}

/// Keys accepted by `--set`.
pub const OVERRIDE_KEYS: [&str; 12] = [
    "relation_label",
    "seeds",
    "threshold",
    "max_iterations",
    "top_k",
    "prefix_max",
    "middle_max",
    "suffix_max",
    "e1_max_words",
    "e2_max_words",
    "normalization",
    "ta_marbuta",
];

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Snapshot { path: PathBuf },
    Http(HttpConfig),
}

fn default_threshold() -> usize {
    100
}
fn default_max_iterations() -> u32 {
    10
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    relation_label: String,
    seeds: PathBuf,
    #[serde(default = "default_threshold")]
    threshold: usize,
    #[serde(default = "default_max_iterations")]
    max_iterations: u32,
    #[serde(default = "default_top_k")]
    top_k: usize,
    prefix_max: Option<usize>,
    middle_max: Option<usize>,
    suffix_max: Option<usize>,
    e1_max_words: Option<usize>,
    e2_max_words: Option<usize>,
    extension_particles: Option<Vec<String>>,
    /// JSON normalization table; replaces the default table.
    normalization: Option<PathBuf>,
    ta_marbuta: Option<TaMarbutaFolding>,
    extra_stopwords: Option<Vec<String>>,
    provider: ProviderConfig,
}

/// A loaded configuration: the run parameters plus where summaries come from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub provider: ProviderConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn open_provider(&self) -> Result<Box<dyn SearchProvider>, CorpusError> {
        Ok(match &self.provider {
            ProviderConfig::Snapshot { path } => {
                Box::new(SnapshotProvider::open(&self.base_dir.join(path))?)
            }
            ProviderConfig::Http(http) => Box::new(HttpProvider::new(http.clone())?),
        })
    }
}

fn parse_override(raw: &str) -> Result<(String, toml::Value), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(raw.to_string()))?;
    let key = key.trim();
    if !OVERRIDE_KEYS.contains(&key) {
        return Err(ConfigError::UnknownOverride(key.to_string()));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

/// Reads `e1<TAB>e2` lines. Blank lines, `#` comments and an `e1<TAB>e2`
/// header are skipped.
pub fn read_seed_file(path: &Path) -> Result<Vec<InstancePair>, ConfigError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let mut seeds = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || line == "e1\te2" {
            continue;
        }
        let (e1, e2) = line.split_once('\t').ok_or_else(|| ConfigError::Invalid {
            path: display.clone(),
            message: format!("line {}: expected e1<TAB>e2", idx + 1),
        })?;
        seeds.push(InstancePair::seed(e1.trim(), e2.trim()));
    }
    Ok(seeds)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let display = path.display().to_string();
    let invalid = |message: String| ConfigError::Invalid {
        path: display.clone(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| invalid(e.to_string()))?;
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        table.insert(key, value);
    }
    let file: FileConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| invalid(e.to_string()))?;

    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut normalization = match &file.normalization {
        Some(p) => NormalizationTable::from_json_file(&base_dir.join(p))
            .map_err(|e| invalid(e.to_string()))?,
        None => NormalizationTable::with_folding(file.ta_marbuta.unwrap_or(TaMarbutaFolding::ToHa)),
    };
    if let Some(extra) = &file.extra_stopwords {
        normalization.extend_stopwords(extra);
    }
    let caps_default = ContextCaps::default();
    let rules_default = EntityRules::default();
    let particles: BTreeSet<String> = file
        .extension_particles
        .clone()
        .unwrap_or_else(|| {
            DEFAULT_EXTENSION_PARTICLES
                .iter()
                .map(|s| s.to_string())
                .collect()
        })
        .iter()
        .map(|p| normalization.normalize_entity(p))
        .collect();

    let run = RunConfig {
        relation_label: file.relation_label,
        seed_pairs: read_seed_file(&base_dir.join(&file.seeds))?,
        threshold: file.threshold,
        max_iterations: file.max_iterations,
        top_k: file.top_k,
        caps: ContextCaps {
            prefix_max: file.prefix_max.unwrap_or(caps_default.prefix_max),
            middle_max: file.middle_max.unwrap_or(caps_default.middle_max),
            suffix_max: file.suffix_max.unwrap_or(caps_default.suffix_max),
        },
        entity_rules: EntityRules {
            e1_max_words: file.e1_max_words.unwrap_or(rules_default.e1_max_words),
            e2_max_words: file.e2_max_words.unwrap_or(rules_default.e2_max_words),
            extension_particles: particles,
        },
        normalization,
    };
    run.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(LoadedConfig {
        run,
        provider: file.provider,
        base_dir,
    })
}
