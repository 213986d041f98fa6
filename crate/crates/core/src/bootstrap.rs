//! The iterative seed → patterns → instances loop.
//!
//! Each iteration learns patterns from the current seeds, queries the
//! provider with every queryable pattern, extracts and filters candidate
//! pairs, and adds the unseen ones to the instance table. Only the pairs
//! added in an iteration seed the next one.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    build_instance_query, build_pattern_query, CorpusError, SearchProvider, DEFAULT_TOP_K,
};
use crate::extract::{filter_candidates, match_pattern, EntityRules, MatchTemplate, PatternId};
use crate::patterns::{
    build_occurrence, merge_occurrences, read_pattern_table, validate_sentence,
    write_pattern_table, ContextCaps, InstancePair, Occurrence, Pattern, Provenance, NULL_FIELD,
};
use crate::textproc::{preprocess, NormalizationTable, Sentence};

pub const INSTANCES_FILE: &str = "instances.tsv";
pub const PATTERNS_FILE: &str = "patterns.tsv";
pub const REPORT_FILE: &str = "report.json";
pub const RESUME_FILE: &str = "resume.json";

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("iteration {iteration}: {source}")]
    Provider {
        iteration: u32,
        #[source]
        source: CorpusError,
    },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run state {path}: {message}")]
    State { path: String, message: String },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> BootstrapError {
    let context = context.into();
    move |source| BootstrapError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub relation_label: String,
    pub seed_pairs: Vec<InstancePair>,
    /// Stop once this many distinct pairs have been extracted. 0 stops
    /// before the first iteration.
    pub threshold: usize,
    pub max_iterations: u32,
    pub top_k: usize,
    pub caps: ContextCaps,
    pub entity_rules: EntityRules,
    pub normalization: NormalizationTable,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            relation_label: String::new(),
            seed_pairs: Vec::new(),
            threshold: 100,
            max_iterations: 10,
            top_k: DEFAULT_TOP_K,
            caps: ContextCaps::default(),
            entity_rules: EntityRules::default(),
            normalization: NormalizationTable::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        let fail = |m: &str| Err(BootstrapError::Config(m.to_string()));
        if self.seed_pairs.is_empty() {
            return fail("at least one seed pair is required");
        }
        if self
            .seed_pairs
            .iter()
            .any(|p| p.e1.trim().is_empty() || p.e2.trim().is_empty())
        {
            return fail("seed pairs must have non-empty entities");
        }
        if self.top_k == 0 {
            return fail("top_k must be at least 1");
        }
        if self.max_iterations == 0 {
            return fail("max_iterations must be at least 1");
        }
        if self.caps.middle_max == 0 {
            return fail("middle_max must be at least 1");
        }
        if self.entity_rules.e1_max_words == 0 || self.entity_rules.e2_max_words == 0 {
            return fail("entity word caps must be at least 1");
        }
        Ok(())
    }

    /// Seeds in normalized form, duplicates removed.
    pub fn normalized_seeds(&self) -> Vec<InstancePair> {
        let mut seen = HashSet::new();
        self.seed_pairs
            .iter()
            .map(|p| {
                InstancePair::seed(
                    self.normalization.normalize_entity(&p.e1),
                    self.normalization.normalize_entity(&p.e2),
                )
            })
            .filter(|p| !p.e1.is_empty() && !p.e2.is_empty())
            .filter(|p| seen.insert((p.e1.clone(), p.e2.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub patterns_total: usize,
    pub patterns_detecting: usize,
    pub instances_new: usize,
    pub instances_repeated: usize,
    pub instances_cumulative: usize,
    /// Ids (rows of the pattern table) of the patterns derived this iteration.
    #[serde(default)]
    pub pattern_ids: Vec<PatternId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRow {
    pub pair: InstancePair,
    pub pattern_id: Option<PatternId>,
}

/// Every known pair, seeds included, without duplicates. A seed that a
/// pattern later detects keeps iteration 0 but gains a pattern id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstanceTable {
    rows: Vec<InstanceRow>,
    index: HashMap<(String, String), usize>,
}

pub const INSTANCE_TSV_HEADER: &str = "e1\te2\tprovenance_iteration\tpattern_id";

impl InstanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, e1: &str, e2: &str) -> bool {
        self.index.contains_key(&(e1.to_string(), e2.to_string()))
    }

    /// Adds a row unless the pair is already present.
    pub fn insert(&mut self, pair: InstancePair, pattern_id: Option<PatternId>) -> bool {
        let key = (pair.e1.clone(), pair.e2.clone());
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.rows.len());
        self.rows.push(InstanceRow { pair, pattern_id });
        true
    }

    /// Records that a pattern re-extracted a seed. Returns true the first
    /// time a seed is detected.
    pub fn mark_detected(&mut self, e1: &str, e2: &str, pattern_id: Option<PatternId>) -> bool {
        let Some(&idx) = self.index.get(&(e1.to_string(), e2.to_string())) else {
            return false;
        };
        let row = &mut self.rows[idx];
        if row.pair.provenance != Provenance::Seed
            || row.pattern_id.is_some()
            || pattern_id.is_none()
        {
            return false;
        }
        row.pattern_id = pattern_id;
        true
    }

    pub fn rows(&self) -> &[InstanceRow] {
        &self.rows
    }

    /// Rows some pattern produced: every non-seed row plus detected seeds.
    pub fn extracted(&self) -> impl Iterator<Item = &InstanceRow> {
        self.rows
            .iter()
            .filter(|r| r.pair.provenance != Provenance::Seed || r.pattern_id.is_some())
    }

    /// Distinct extracted pairs. Seeds count once a pattern detects them.
    pub fn extracted_count(&self) -> usize {
        self.extracted().count()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{INSTANCE_TSV_HEADER}")?;
        for row in &self.rows {
            let pattern = row
                .pattern_id
                .map_or_else(|| NULL_FIELD.to_string(), |id| id.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                row.pair.e1,
                row.pair.e2,
                row.pair.provenance.iteration(),
                pattern
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, String> {
        let mut table = Self::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if idx == 0 {
                if line != INSTANCE_TSV_HEADER {
                    return Err(format!("unexpected instance table header: {line:?}"));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(format!(
                    "line {}: expected 4 columns, got {}",
                    idx + 1,
                    cols.len()
                ));
            }
            let iteration: u32 = cols[2]
                .parse()
                .map_err(|e| format!("line {}: {e}", idx + 1))?;
            let provenance = if iteration == 0 {
                Provenance::Seed
            } else {
                Provenance::Extracted(iteration)
            };
            let pattern_id = if cols[3] == NULL_FIELD {
                None
            } else {
                Some(
                    cols[3]
                        .parse()
                        .map_err(|e| format!("line {}: {e}", idx + 1))?,
                )
            };
            table.insert(InstancePair::new(cols[0], cols[1], provenance), pattern_id);
        }
        Ok(table)
    }
}

/// Splits `incoming` into pairs the table does not hold yet and a count of
/// the rest. Seeds live in the table, so pairs equal to a seed count as
/// repeated.
pub fn dedup_and_count(
    table: &InstanceTable,
    incoming: &[InstancePair],
) -> (Vec<InstancePair>, usize) {
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let new: Vec<InstancePair> = incoming
        .iter()
        .filter(|p| !table.contains(&p.e1, &p.e2) && seen.insert(p.key()))
        .cloned()
        .collect();
    let repeated = incoming.len() - new.len();
    (new, repeated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    NoProgress,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: InstanceTable,
    pub patterns: Vec<Pattern>,
    pub reports: Vec<IterationReport>,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumeState {
    /// The next iteration to run.
    pub iteration: u32,
    pub seeds_next: Vec<(String, String)>,
    pub table_path: PathBuf,
    pub patterns_path: PathBuf,
}

/// Writes all run artifacts into `dir`.
pub fn save_state(
    dir: &Path,
    table: &InstanceTable,
    patterns: &[Pattern],
    reports: &[IterationReport],
    next_iteration: u32,
    seeds_next: &[InstancePair],
) -> Result<(), BootstrapError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(format!("writing {}", path.display())))
    };
    let mut buf = Vec::new();
    table
        .write_tsv(&mut buf)
        .map_err(io_err("serializing instances"))?;
    write(INSTANCES_FILE, buf)?;
    let mut buf = Vec::new();
    write_pattern_table(patterns, &mut buf).map_err(io_err("serializing patterns"))?;
    write(PATTERNS_FILE, buf)?;
    let mut report = serde_json::to_vec_pretty(reports).expect("reports serialize");
    report.push(b'\n');
    write(REPORT_FILE, report)?;
    let resume = ResumeState {
        iteration: next_iteration,
        seeds_next: seeds_next
            .iter()
            .map(|p| (p.e1.clone(), p.e2.clone()))
            .collect(),
        table_path: PathBuf::from(INSTANCES_FILE),
        patterns_path: PathBuf::from(PATTERNS_FILE),
    };
    let mut resume = serde_json::to_vec_pretty(&resume).expect("resume state serializes");
    resume.push(b'\n');
    write(RESUME_FILE, resume)
}

pub fn load_reports(path: &Path) -> Result<Vec<IterationReport>, BootstrapError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BootstrapError::State {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_table(path: &Path) -> Result<InstanceTable, BootstrapError> {
    let file = fs::File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    InstanceTable::read_tsv(BufReader::new(file)).map_err(|message| BootstrapError::State {
        path: path.display().to_string(),
        message,
    })
}

pub fn load_patterns(path: &Path) -> Result<Vec<Pattern>, BootstrapError> {
    let file = fs::File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    read_pattern_table(BufReader::new(file)).map_err(|message| BootstrapError::State {
        path: path.display().to_string(),
        message,
    })
}

struct RunState {
    table: InstanceTable,
    patterns: Vec<Pattern>,
    reports: Vec<IterationReport>,
    seeds: Vec<InstancePair>,
    iteration: u32,
}

pub struct Bootstrapper<'a> {
    config: RunConfig,
    provider: &'a dyn SearchProvider,
    checkpoint: Option<PathBuf>,
}

impl<'a> Bootstrapper<'a> {
    pub fn new(config: RunConfig, provider: &'a dyn SearchProvider) -> Self {
        Self {
            config,
            provider,
            checkpoint: None,
        }
    }

    /// Persist state into `dir` after every iteration.
    pub fn with_checkpoint(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint = Some(dir.into());
        self
    }

    pub fn run(&self) -> Result<RunOutcome, BootstrapError> {
        self.config.validate()?;
        let seeds = self.config.normalized_seeds();
        if seeds.is_empty() {
            return Err(BootstrapError::Config(
                "every seed normalized to an empty entity".into(),
            ));
        }
        let mut table = InstanceTable::new();
        for seed in &seeds {
            table.insert(seed.clone(), None);
        }
        self.drive(RunState {
            table,
            patterns: Vec::new(),
            reports: Vec::new(),
            seeds,
            iteration: 1,
        })
    }

    /// Continues a run from the state saved in `dir`.
    pub fn resume(&self, dir: &Path) -> Result<RunOutcome, BootstrapError> {
        let resume_path = dir.join(RESUME_FILE);
        let text = fs::read_to_string(&resume_path)
            .map_err(io_err(format!("reading {}", resume_path.display())))?;
        let resume: ResumeState =
            serde_json::from_str(&text).map_err(|e| BootstrapError::State {
                path: resume_path.display().to_string(),
                message: e.to_string(),
            })?;
        let table = load_table(&dir.join(&resume.table_path))?;
        let mut patterns = load_patterns(&dir.join(&resume.patterns_path))?;
        let reports = load_reports(&dir.join(REPORT_FILE))?;
        for p in patterns.iter_mut() {
            p.recurrence = 0;
        }
        for report in &reports {
            for &id in &report.pattern_ids {
                if let Some(p) = patterns.get_mut(id) {
                    p.recurrence += 1;
                }
            }
        }
        for p in patterns.iter_mut() {
            p.recurrence = p.recurrence.max(1);
        }
        let seeds = resume
            .seeds_next
            .into_iter()
            .map(|(e1, e2)| {
                InstancePair::new(
                    e1,
                    e2,
                    Provenance::Extracted(resume.iteration.saturating_sub(1)),
                )
            })
            .collect();
        self.drive(RunState {
            table,
            patterns,
            reports,
            seeds,
            iteration: resume.iteration,
        })
    }

    fn drive(&self, mut state: RunState) -> Result<RunOutcome, BootstrapError> {
        self.persist(&state)?;
        let stop = loop {
            if state.table.extracted_count() >= self.config.threshold {
                break StopReason::Threshold;
            }
            if state.seeds.is_empty() {
                break StopReason::NoProgress;
            }
            if state.iteration > self.config.max_iterations {
                break StopReason::MaxIterations;
            }
            let (report, new) = self.iterate(&mut state)?;
            info!(
                "iteration {}: P_total={} P_detect={} R={} N={} T={}",
                report.iteration,
                report.patterns_total,
                report.patterns_detecting,
                report.instances_repeated,
                report.instances_new,
                report.instances_cumulative
            );
            state.reports.push(report);
            state.seeds = new;
            state.iteration += 1;
            self.persist(&state)?;
        };
        self.persist(&state)?;
        Ok(RunOutcome {
            table: state.table,
            patterns: state.patterns,
            reports: state.reports,
            stop,
        })
    }

    fn persist(&self, state: &RunState) -> Result<(), BootstrapError> {
        match &self.checkpoint {
            Some(dir) => save_state(
                dir,
                &state.table,
                &state.patterns,
                &state.reports,
                state.iteration,
                &state.seeds,
            ),
            None => Ok(()),
        }
    }

    fn fetch_sentences(
        &self,
        query: &crate::corpus::Query,
        iteration: u32,
    ) -> Result<Vec<Sentence>, BootstrapError> {
        let summaries = self
            .provider
            .fetch(query)
            .map_err(|source| BootstrapError::Provider { iteration, source })?;
        Ok(summaries
            .iter()
            .flat_map(|s| preprocess(s, &self.config.normalization))
            .collect())
    }

    /// Occurrences of one seed pair in its own search results.
    fn occurrences_for(
        &self,
        seed: &InstancePair,
        iteration: u32,
    ) -> Result<Vec<Occurrence>, BootstrapError> {
        let query = build_instance_query(seed, self.config.top_k)
            .map_err(|source| BootstrapError::Provider { iteration, source })?;
        let sentences = self.fetch_sentences(&query, iteration)?;
        let caps = self.config.caps;
        Ok(sentences
            .iter()
            .filter_map(|s| {
                let (e1, e2) = validate_sentence(s, seed, caps.middle_max)?;
                build_occurrence(s, e1, e2, caps).ok()
            })
            .collect())
    }

    fn iterate(
        &self,
        state: &mut RunState,
    ) -> Result<(IterationReport, Vec<InstancePair>), BootstrapError> {
        let iteration = state.iteration;

        let per_seed: Vec<Vec<Occurrence>> = state
            .seeds
            .par_iter()
            .map(|seed| self.occurrences_for(seed, iteration))
            .collect::<Result<_, _>>()?;
        let occurrences: Vec<Occurrence> = per_seed.into_iter().flatten().collect();
        let derived = merge_occurrences(&occurrences);
        debug!(
            "iteration {iteration}: {} occurrences -> {} patterns",
            occurrences.len(),
            derived.len()
        );

        let mut pattern_ids = Vec::with_capacity(derived.len());
        for pattern in derived {
            match state.patterns.iter().position(|p| p.same_shape(&pattern)) {
                Some(id) => {
                    let existing = &mut state.patterns[id];
                    existing.recurrence += 1;
                    existing.repetition += pattern.repetition;
                    pattern_ids.push(id);
                }
                None => {
                    pattern_ids.push(state.patterns.len());
                    state.patterns.push(pattern);
                }
            }
        }

        let queryable: Vec<PatternId> = pattern_ids
            .iter()
            .copied()
            .filter(|&id| state.patterns[id].is_queryable())
            .collect();
        let sentences: Vec<Sentence> = queryable
            .par_iter()
            .map(|&id| {
                let query = build_pattern_query(&state.patterns[id], self.config.top_k)
                    .expect("queryable pattern");
                self.fetch_sentences(&query, iteration)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();

        let templates: Vec<MatchTemplate> = queryable
            .iter()
            .map(|&id| {
                MatchTemplate::from_pattern(
                    id,
                    &state.patterns[id],
                    self.config.entity_rules.clone(),
                )
            })
            .collect();
        let per_template: Vec<Vec<_>> = templates
            .par_iter()
            .map(|t| sentences.iter().flat_map(|s| match_pattern(t, s)).collect())
            .collect();
        let patterns_detecting = per_template.iter().filter(|c| !c.is_empty()).count();
        let candidates: Vec<_> = per_template.into_iter().flatten().collect();

        let accepted = filter_candidates(&candidates, &self.config.entity_rules);
        let incoming: Vec<InstancePair> = accepted.iter().map(|a| a.pair.clone()).collect();
        let (new, repeated) = dedup_and_count(&state.table, &incoming);
        let source_of = |pair: &InstancePair| {
            accepted
                .iter()
                .find(|a| a.pair.key() == pair.key())
                .and_then(|a| a.first_pattern())
        };
        for pair in &incoming {
            state
                .table
                .mark_detected(&pair.e1, &pair.e2, source_of(pair));
        }
        let mut added = Vec::with_capacity(new.len());
        for pair in new {
            let source = source_of(&pair);
            let pair = InstancePair::new(pair.e1, pair.e2, Provenance::Extracted(iteration));
            state.table.insert(pair.clone(), source);
            added.push(pair);
        }

        let report = IterationReport {
            iteration,
            patterns_total: pattern_ids.len(),
            patterns_detecting,
            instances_new: added.len(),
            instances_repeated: repeated,
            instances_cumulative: state.table.extracted_count(),
            pattern_ids,
        };
        Ok((report, added))
    }
}

/// Runs the loop without persisting anything.
pub fn run(config: RunConfig, provider: &dyn SearchProvider) -> Result<RunOutcome, BootstrapError> {
    Bootstrapper::new(config, provider).run()
}
