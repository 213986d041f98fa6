//! Occurrence construction and pattern induction.
//!
//! A validated sentence becomes an [`Occurrence`]: the words around and
//! between the two entities plus their order. Occurrences are then folded
//! into [`Pattern`]s by [`merge_occurrences`].

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{Sentence, SourceRef};

/// Serialized form of a null context field.
pub const NULL_FIELD: &str = "∅";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("entity spans {e1:?} and {e2:?} overlap")]
    SpanOverlap { e1: Range<usize>, e2: Range<usize> },
    #[error("span {0:?} is outside the sentence")]
    SpanOutOfBounds(Range<usize>),
    #[error("{0} words between the entities exceeds the middle cap")]
    GapTooWide(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Seed,
    Extracted(u32),
}

impl Provenance {
    /// 0 for seeds, otherwise the iteration that first extracted the pair.
    pub fn iteration(self) -> u32 {
        match self {
            Provenance::Seed => 0,
            Provenance::Extracted(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstancePair {
    pub e1: String,
    pub e2: String,
    pub provenance: Provenance,
}

impl InstancePair {
    pub fn new(e1: impl Into<String>, e2: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            e1: e1.into(),
            e2: e2.into(),
            provenance,
        }
    }

    pub fn seed(e1: impl Into<String>, e2: impl Into<String>) -> Self {
        Self::new(e1, e2, Provenance::Seed)
    }

    /// Identity of the pair, ignoring provenance.
    pub fn key(&self) -> (&str, &str) {
        (&self.e1, &self.e2)
    }

    pub fn e1_tokens(&self) -> Vec<&str> {
        self.e1.split_whitespace().collect()
    }

    pub fn e2_tokens(&self) -> Vec<&str> {
        self.e2.split_whitespace().collect()
    }
}

impl fmt::Display for InstancePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.e1, self.e2)
    }
}

/// Word caps applied when cutting context around the entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCaps {
    pub prefix_max: usize,
    pub middle_max: usize,
    pub suffix_max: usize,
}

impl Default for ContextCaps {
    fn default() -> Self {
        Self {
            prefix_max: 2,
            middle_max: 3,
            suffix_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Occurrence {
    pub prefix: Option<Vec<String>>,
    pub e1_span: Range<usize>,
    pub middle: Option<Vec<String>>,
    pub e2_span: Range<usize>,
    pub suffix: Option<Vec<String>>,
    /// True when e1 precedes e2.
    pub order: bool,
    pub source: Option<SourceRef>,
}

fn find_all(tokens: &[String], needle: &[&str]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| w.iter().zip(needle).all(|(a, b)| a == b))
        .map(|(i, _)| i)
        .collect()
}

fn gap_between(a: &Range<usize>, b: &Range<usize>) -> Option<usize> {
    if a.end <= b.start {
        Some(b.start - a.end)
    } else if b.end <= a.start {
        Some(a.start - b.end)
    } else {
        None
    }
}

/// Locates both entities in the sentence and checks that at most
/// `max_gap` words separate them. Among several placements the one with the
/// smallest gap wins, ties going to the leftmost e1 then the leftmost e2.
pub fn validate_sentence(
    sentence: &Sentence,
    pair: &InstancePair,
    max_gap: usize,
) -> Option<(Range<usize>, Range<usize>)> {
    let e1 = pair.e1_tokens();
    let e2 = pair.e2_tokens();
    let e1_hits = find_all(&sentence.tokens, &e1);
    if e1_hits.is_empty() {
        return None;
    }
    let e2_hits = find_all(&sentence.tokens, &e2);
    let mut best: Option<(usize, Range<usize>, Range<usize>)> = None;
    for &i in &e1_hits {
        let s1 = i..i + e1.len();
        for &j in &e2_hits {
            let s2 = j..j + e2.len();
            let Some(gap) = gap_between(&s1, &s2) else {
                continue;
            };
            if gap <= max_gap && best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
                best = Some((gap, s1.clone(), s2));
            }
        }
    }
    best.map(|(_, s1, s2)| (s1, s2))
}

fn non_empty(words: &[String]) -> Option<Vec<String>> {
    (!words.is_empty()).then(|| words.to_vec())
}

/// Cuts a sentence into prefix, middle and suffix around two entity spans.
pub fn build_occurrence(
    sentence: &Sentence,
    e1_span: Range<usize>,
    e2_span: Range<usize>,
    caps: ContextCaps,
) -> Result<Occurrence, PatternError> {
    let n = sentence.tokens.len();
    for span in [&e1_span, &e2_span] {
        if span.start >= span.end || span.end > n {
            return Err(PatternError::SpanOutOfBounds(span.clone()));
        }
    }
    if gap_between(&e1_span, &e2_span).is_none() {
        return Err(PatternError::SpanOverlap {
            e1: e1_span,
            e2: e2_span,
        });
    }
    let order = e1_span.start < e2_span.start;
    let (first, second) = if order {
        (&e1_span, &e2_span)
    } else {
        (&e2_span, &e1_span)
    };
    let middle = &sentence.tokens[first.end..second.start];
    if middle.len() > caps.middle_max {
        return Err(PatternError::GapTooWide(middle.len()));
    }
    let prefix_start = first.start.saturating_sub(caps.prefix_max);
    let prefix = &sentence.tokens[prefix_start..first.start];
    let suffix_end = (second.end + caps.suffix_max).min(n);
    let suffix = &sentence.tokens[second.end..suffix_end];

    Ok(Occurrence {
        prefix: non_empty(prefix),
        e1_span,
        middle: non_empty(middle),
        e2_span,
        suffix: non_empty(suffix),
        order,
        source: sentence.source.clone(),
    })
}

/// Positive and negative instance counts attributed to a pattern.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternStats {
    pub positive: u32,
    pub negative: u32,
}

impl PatternStats {
    pub fn total(&self) -> u32 {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub prefix: Option<Vec<String>>,
    pub middle: Option<Vec<String>>,
    pub suffix: Option<Vec<String>>,
    pub order: bool,
    /// Number of occurrences folded into this pattern.
    pub repetition: u32,
    pub stats: PatternStats,
    /// Number of iterations that derived this pattern.
    pub recurrence: u32,
}

/// Identity of a pattern for deduplication: (prefix, middle, suffix, order).
pub type PatternShape<'a> = (
    &'a Option<Vec<String>>,
    &'a Option<Vec<String>>,
    &'a Option<Vec<String>>,
    bool,
);

impl Pattern {
    pub fn new(
        prefix: Option<Vec<String>>,
        middle: Option<Vec<String>>,
        suffix: Option<Vec<String>>,
        order: bool,
    ) -> Self {
        Self {
            prefix,
            middle,
            suffix,
            order,
            repetition: 1,
            stats: PatternStats::default(),
            recurrence: 1,
        }
    }

    pub fn shape(&self) -> PatternShape<'_> {
        (&self.prefix, &self.middle, &self.suffix, self.order)
    }

    pub fn same_shape(&self, other: &Pattern) -> bool {
        self.shape() == other.shape()
    }

    /// Both prefix and middle are present, so a search query can be built.
    pub fn is_queryable(&self) -> bool {
        self.prefix.is_some() && self.middle.is_some()
    }
}

impl From<&Occurrence> for Pattern {
    fn from(occ: &Occurrence) -> Self {
        Pattern::new(
            occ.prefix.clone(),
            occ.middle.clone(),
            occ.suffix.clone(),
            occ.order,
        )
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field =
            |w: &Option<Vec<String>>| w.as_ref().map_or(NULL_FIELD.to_string(), |w| w.join(" "));
        let (first, second) = if self.order {
            ("<e1>", "<e2>")
        } else {
            ("<e2>", "<e1>")
        };
        write!(
            f,
            "{} {first} {} {second} {}",
            field(&self.prefix),
            field(&self.middle),
            field(&self.suffix)
        )
    }
}

/// Words of `a` that also appear in `b`, in `a`'s order. `None` when either
/// side is null or nothing is shared.
fn intersect(a: &Option<Vec<String>>, b: &Option<Vec<String>>) -> Option<Vec<String>> {
    let (a, b) = (a.as_ref()?, b.as_ref()?);
    let shared: Vec<String> = a.iter().filter(|w| b.contains(w)).cloned().collect();
    (!shared.is_empty()).then_some(shared)
}

/// Merges `later` into `earlier` if the matching criteria allow it.
pub fn try_merge(earlier: &Pattern, later: &Pattern) -> Option<Pattern> {
    if earlier.order != later.order {
        return None;
    }
    let (prefix, middle, suffix) =
        if earlier.prefix == later.prefix && earlier.middle == later.middle {
            let suffix = (earlier.suffix == later.suffix)
                .then(|| earlier.suffix.clone())
                .flatten();
            (earlier.prefix.clone(), earlier.middle.clone(), suffix)
        } else {
            let prefix = intersect(&earlier.prefix, &later.prefix)?;
            let middle = intersect(&earlier.middle, &later.middle)?;
            (Some(prefix), Some(middle), None)
        };
    Some(Pattern {
        prefix,
        middle,
        suffix,
        order: earlier.order,
        repetition: earlier.repetition + later.repetition,
        stats: PatternStats {
            positive: earlier.stats.positive + later.stats.positive,
            negative: earlier.stats.negative + later.stats.negative,
        },
        recurrence: earlier.recurrence.max(later.recurrence),
    })
}

/// Re-merges pattern `changed` until no pair in `patterns` is mergeable.
/// Only pairs involving the changed pattern can have become mergeable; the
/// lowest-indexed such pair is merged first, into the lower index.
fn settle(patterns: &mut Vec<Pattern>, mut changed: usize) {
    loop {
        if let Some(x) =
            (0..changed).find(|&x| try_merge(&patterns[x], &patterns[changed]).is_some())
        {
            let later = patterns.remove(changed);
            patterns[x] = try_merge(&patterns[x], &later).expect("checked mergeable");
            changed = x;
            continue;
        }
        if let Some(y) = (changed + 1..patterns.len())
            .find(|&y| try_merge(&patterns[changed], &patterns[y]).is_some())
        {
            let later = patterns.remove(y);
            patterns[changed] = try_merge(&patterns[changed], &later).expect("checked mergeable");
            continue;
        }
        break;
    }
}

/// Folds occurrences into patterns. Occurrences are taken in input order and
/// each one joins the first existing pattern (in creation order) it can merge
/// with; merging continues to a fixpoint.
pub fn merge_occurrences(occs: &[Occurrence]) -> Vec<Pattern> {
    let mut patterns: Vec<Pattern> = Vec::new();
    for occ in occs {
        let candidate = Pattern::from(occ);
        match patterns
            .iter()
            .position(|p| try_merge(p, &candidate).is_some())
        {
            Some(i) => {
                patterns[i] = try_merge(&patterns[i], &candidate).expect("checked mergeable");
                settle(&mut patterns, i);
            }
            None => patterns.push(candidate),
        }
    }
    patterns
}

fn format_field(words: &Option<Vec<String>>) -> String {
    words
        .as_ref()
        .map_or_else(|| NULL_FIELD.to_string(), |w| w.join(" "))
}

fn parse_field(field: &str) -> Option<Vec<String>> {
    if field == NULL_FIELD || field.trim().is_empty() {
        None
    } else {
        Some(field.split_whitespace().map(String::from).collect())
    }
}

pub const PATTERN_TSV_HEADER: &str =
    "prefix\tmiddle\tsuffix\torder\trepetition\tpositive\tnegative\tconfidence";

/// Writes the pattern table; row `i` (0-based, after the header) is pattern id `i`.
pub fn write_pattern_table<W: Write>(patterns: &[Pattern], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PATTERN_TSV_HEADER}")?;
    for p in patterns {
        let confidence = if p.stats.total() == 0 {
            NULL_FIELD.to_string()
        } else {
            format!(
                "{:.6}",
                f64::from(p.stats.positive) / f64::from(p.stats.total())
            )
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            format_field(&p.prefix),
            format_field(&p.middle),
            format_field(&p.suffix),
            p.order,
            p.repetition,
            p.stats.positive,
            p.stats.negative,
            confidence
        )?;
    }
    Ok(())
}

/// Reads a table written by [`write_pattern_table`]. Recurrence is not stored
/// in the table and comes back as 1.
pub fn read_pattern_table<R: BufRead>(input: R) -> Result<Vec<Pattern>, String> {
    let mut patterns = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if idx == 0 {
            if line != PATTERN_TSV_HEADER {
                return Err(format!("unexpected pattern table header: {line:?}"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(format!(
                "line {}: expected 8 columns, got {}",
                idx + 1,
                cols.len()
            ));
        }
        let num = |s: &str| {
            s.parse::<u32>()
                .map_err(|e| format!("line {}: {e}", idx + 1))
        };
        let order = cols[3]
            .parse::<bool>()
            .map_err(|e| format!("line {}: {e}", idx + 1))?;
        let mut p = Pattern::new(
            parse_field(cols[0]),
            parse_field(cols[1]),
            parse_field(cols[2]),
            order,
        );
        p.repetition = num(cols[4])?;
        p.stats = PatternStats {
            positive: num(cols[5])?,
            negative: num(cols[6])?,
        };
        patterns.push(p);
    }
    Ok(patterns)
}
