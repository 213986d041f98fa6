//! `relboot` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::bootstrap::{
    load_patterns, load_reports, load_table, BootstrapError, Bootstrapper, InstanceTable,
    IterationReport, StopReason, INSTANCES_FILE, PATTERNS_FILE, REPORT_FILE,
};
use crate::config::{load_config, ConfigError};
use crate::corpus::{CorpusError, SnapshotMetadata, SnapshotStore};
use crate::eval::{attribute_pattern_stats, score_instances, EvalError, GoldSet, MetricsReport};
use crate::patterns::{Provenance, NULL_FIELD};
use crate::textproc::NormalizationTable;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(
    name = "relboot",
    version,
    about = "Bootstrap binary relations from Arabic search summaries"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the bootstrap loop and write instances.tsv, patterns.tsv and report.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set threshold=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Continue from the state saved in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a run directory against gold judgments and write metrics.json.
    Eval {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Undetected pairs; defaults to undetected.tsv next to the gold file.
        #[arg(long)]
        undetected: Option<PathBuf>,
        /// Config used for the run (relation label and normalization table).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the contents of a run directory.
    Inspect {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = InspectWhat::Report)]
        what: InspectWhat,
    },
    /// Build a snapshot corpus from a directory of per-query text files.
    Snapshot {
        raw_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "snapshot")]
        provider: String,
        #[arg(long)]
        captured: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectWhat {
    Report,
    Patterns,
    Instances,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    ProviderUnavailable(String),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
    #[error("{0}")]
    MissingJudgment(String),
    #[error("{0}")]
    Data(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::ProviderUnavailable(_) => 3,
            CliError::Io { .. } => 4,
            CliError::MalformedSnapshot(_) => 5,
            CliError::MissingJudgment(_) => 6,
            CliError::Data(_) => 7,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::MalformedSnapshot { .. } => CliError::MalformedSnapshot(e.to_string()),
            CorpusError::ProviderUnavailable(_) => CliError::ProviderUnavailable(e.to_string()),
            CorpusError::InvalidQuery(_) | CorpusError::EmptyEntity => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<BootstrapError> for CliError {
    fn from(e: BootstrapError) -> Self {
        match e {
            BootstrapError::Provider { source, iteration } => match CliError::from(source) {
                CliError::ProviderUnavailable(m) => {
                    CliError::ProviderUnavailable(format!("iteration {iteration}: {m}"))
                }
                other => other,
            },
            BootstrapError::Config(m) => CliError::Config(ConfigError::Invalid {
                path: "run configuration".into(),
                message: m,
            }),
            BootstrapError::Io { context, source } => CliError::Io { context, source },
            BootstrapError::State { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingJudgment(_) => CliError::MissingJudgment(e.to_string()),
            EvalError::Io { path, source } => CliError::Io {
                context: format!("reading {path}"),
                source,
            },
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            out: dir,
            resume,
        } => cmd_run(&config, &overrides, &dir, resume, out),
        Command::Eval {
            out: dir,
            gold,
            undetected,
            config,
            overrides,
        } => cmd_eval(
            &dir,
            &gold,
            undetected.as_deref(),
            config.as_deref(),
            &overrides,
            out,
        )
        .map(|_| ()),
        Command::Inspect { out: dir, what } => cmd_inspect(&dir, what, out),
        Command::Snapshot {
            raw_dir,
            out: file,
            provider,
            captured,
        } => cmd_snapshot(&raw_dir, &file, &provider, captured, out).map(|_| ()),
    }
}

fn report_header<W: Write>(out: &mut W) -> Result<(), CliError> {
    writeln!(out, "iteration\tR\tN\tT\tP_total\tP_detect").map_err(io("writing output"))
}

fn report_line<W: Write>(out: &mut W, r: &IterationReport) -> Result<(), CliError> {
    writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}",
        r.iteration,
        r.instances_repeated,
        r.instances_new,
        r.instances_cumulative,
        r.patterns_total,
        r.patterns_detecting
    )
    .map_err(io("writing output"))
}

pub fn cmd_run<W: Write>(
    config_path: &Path,
    overrides: &[String],
    dir: &Path,
    resume: bool,
    out: &mut W,
) -> Result<(), CliError> {
    let config = load_config(config_path, overrides)?;
    let provider = config.open_provider()?;
    let label = config.run.relation_label.clone();
    let boot = Bootstrapper::new(config.run, provider.as_ref()).with_checkpoint(dir);
    let outcome = if resume {
        boot.resume(dir)?
    } else {
        boot.run()?
    };

    if !label.is_empty() {
        writeln!(out, "relation: {label}").map_err(io("writing output"))?;
    }
    report_header(out)?;
    for r in &outcome.reports {
        report_line(out, r)?;
    }
    let stop = match outcome.stop {
        StopReason::Threshold => "threshold reached",
        StopReason::NoProgress => "no new instances",
        StopReason::MaxIterations => "iteration limit",
    };
    writeln!(
        out,
        "stopped: {stop}; total extracted {}",
        outcome.table.extracted_count()
    )
    .map_err(io("writing output"))?;
    Ok(())
}

fn load_or_empty<T: Default>(
    path: &Path,
    load: impl FnOnce(&Path) -> Result<T, BootstrapError>,
) -> Result<T, CliError> {
    if path.exists() {
        Ok(load(path)?)
    } else {
        Ok(T::default())
    }
}

/// Two decimals with trailing zeros dropped: 0.70 → "0.7", 0 → "0".
pub fn format_metric(value: f64) -> String {
    let s = format!("{value:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn cmd_eval<W: Write>(
    dir: &Path,
    gold_path: &Path,
    undetected: Option<&Path>,
    config_path: Option<&Path>,
    overrides: &[String],
    out: &mut W,
) -> Result<MetricsReport, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io {
            context: format!("run directory {}", dir.display()),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let (label, normalization) = match config_path {
        Some(p) => {
            let c = load_config(p, overrides)?;
            (c.run.relation_label, c.run.normalization)
        }
        None => (String::new(), NormalizationTable::default()),
    };
    let table: InstanceTable = load_or_empty(&dir.join(INSTANCES_FILE), load_table)?;
    let mut patterns = load_or_empty(&dir.join(PATTERNS_FILE), load_patterns)?;
    let reports = load_or_empty(&dir.join(REPORT_FILE), load_reports)?;

    let sibling = gold_path.with_file_name("undetected.tsv");
    let undetected = undetected
        .map(Path::to_path_buf)
        .or_else(|| sibling.exists().then_some(sibling));
    let gold = GoldSet::load(gold_path, undetected.as_deref(), &normalization)?;

    let counts = score_instances(&table, &gold)?;
    attribute_pattern_stats(&table, &gold, &mut patterns)?;
    let groups: Vec<Vec<usize>> = reports.iter().map(|r| r.pattern_ids.clone()).collect();
    let report = MetricsReport::build(&label, counts, &patterns, &groups);

    let mut json = serde_json::to_vec_pretty(&report).expect("metrics serialize");
    json.push(b'\n');
    let path = dir.join(METRICS_FILE);
    fs::write(&path, json).map_err(io(format!("writing {}", path.display())))?;

    let name = if label.is_empty() {
        "-"
    } else {
        label.as_str()
    };
    writeln!(out, "relation\tT\tNc\tI\tUc\tprecision\trecall\tf_measure")
        .map_err(io("writing output"))?;
    writeln!(
        out,
        "{name}\t{}\t{}\t{}\t{}\t{}",
        report.total,
        report.n_correct,
        report.n_incorrect,
        report.n_undetected,
        [report.precision, report.recall, report.f_measure]
            .map(format_metric)
            .join(" ")
    )
    .map_err(io("writing output"))?;
    Ok(report)
}

pub fn cmd_inspect<W: Write>(dir: &Path, what: InspectWhat, out: &mut W) -> Result<(), CliError> {
    let w = io("writing output");
    match what {
        InspectWhat::Report => {
            let reports = load_reports(&dir.join(REPORT_FILE))?;
            report_header(out)?;
            for r in &reports {
                report_line(out, r)?;
            }
        }
        InspectWhat::Patterns => {
            let patterns = load_patterns(&dir.join(PATTERNS_FILE))?;
            let mut text = String::new();
            for (id, p) in patterns.iter().enumerate() {
                text.push_str(&format!("{id}\trep={}\t{p}\n", p.repetition));
            }
            out.write_all(text.as_bytes()).map_err(w)?;
        }
        InspectWhat::Instances => {
            let table = load_table(&dir.join(INSTANCES_FILE))?;
            let mut text = String::new();
            for row in table.rows() {
                let origin = match (row.pair.provenance, row.pattern_id) {
                    (Provenance::Seed, Some(id)) => format!("seed, detected by pattern {id}"),
                    (Provenance::Seed, None) => "seed".to_string(),
                    (p, id) => format!(
                        "iteration {} pattern {}",
                        p.iteration(),
                        id.map_or_else(|| NULL_FIELD.to_string(), |id| id.to_string())
                    ),
                };
                text.push_str(&format!("{}\t{}\t{origin}\n", row.pair.e1, row.pair.e2));
            }
            out.write_all(text.as_bytes()).map_err(w)?;
        }
    }
    Ok(())
}

/// Counts from building a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotSummary {
    pub queries: usize,
    pub entries: usize,
    pub blank_dropped: usize,
}

/// Each `*.txt` file in `raw_dir` is one query (the file stem); each
/// non-blank line is one summary, ranked by line order.
pub fn cmd_snapshot<W: Write>(
    raw_dir: &Path,
    file: &Path,
    provider: &str,
    captured: Option<String>,
    out: &mut W,
) -> Result<SnapshotSummary, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(raw_dir)
        .map_err(io(format!("reading {}", raw_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();

    let mut store = SnapshotStore::new(SnapshotMetadata {
        provider: provider.to_string(),
        captured,
    });
    let mut summary = SnapshotSummary {
        queries: 0,
        entries: 0,
        blank_dropped: 0,
    };
    for path in &paths {
        let query = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| {
                CliError::MalformedSnapshot(format!(
                    "{}: file name is not a usable query",
                    path.display()
                ))
            })?;
        let bytes = fs::read(path).map_err(io(format!("reading {}", path.display())))?;
        let text = String::from_utf8(bytes).map_err(|_| {
            CliError::MalformedSnapshot(format!("{}: not valid UTF-8", path.display()))
        })?;
        summary.queries += 1;
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                summary.blank_dropped += 1;
                continue;
            }
            store.push(query, line);
            summary.entries += 1;
        }
    }

    let mut buf = Vec::new();
    store
        .write_jsonl(&mut buf)
        .map_err(io("serializing snapshot"))?;
    let text = String::from_utf8(buf).expect("snapshot is UTF-8");
    SnapshotStore::parse(&text, &file.display().to_string())?;
    fs::write(file, &text).map_err(io(format!("writing {}", file.display())))?;
    writeln!(
        out,
        "wrote {} entries for {} queries to {} ({} blank lines dropped)",
        summary.entries,
        summary.queries,
        file.display(),
        summary.blank_dropped
    )
    .map_err(io("writing output"))?;
    Ok(summary)
}
