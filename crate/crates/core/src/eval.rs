//! Scoring extracted instances against human judgments and rating patterns.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::InstanceTable;
use crate::extract::PatternId;
use crate::patterns::{InstancePair, Pattern, PatternStats};
use crate::textproc::NormalizationTable;

/// Confidence at or above which a pattern counts as reliable.
pub const RELIABLE_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no judgment for extracted pair {0}")]
    MissingJudgment(InstancePair),
    #[error("pattern has no positive or negative evidence")]
    NoEvidence,
    #[error("conflicting judgments for ({0}, {1})")]
    ConflictingJudgment(String, String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Judged pairs plus the correct pairs the system missed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    judgments: HashMap<(String, String), bool>,
    undetected: Vec<InstancePair>,
}

impl GoldSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn judge(&mut self, e1: &str, e2: &str, correct: bool) -> Result<(), EvalError> {
        let key = (e1.to_string(), e2.to_string());
        match self.judgments.get(&key) {
            Some(&prev) if prev != correct => Err(EvalError::ConflictingJudgment(key.0, key.1)),
            _ => {
                self.judgments.insert(key, correct);
                Ok(())
            }
        }
    }

    pub fn add_undetected(&mut self, pair: InstancePair) {
        if !self.undetected.iter().any(|p| p.key() == pair.key()) {
            self.undetected.push(pair);
        }
    }

    pub fn judgment(&self, e1: &str, e2: &str) -> Option<bool> {
        self.judgments
            .get(&(e1.to_string(), e2.to_string()))
            .copied()
    }

    pub fn undetected(&self) -> &[InstancePair] {
        &self.undetected
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Reads `e1<TAB>e2<TAB>label` rows (label 1 or 0) and, optionally,
    /// `e1<TAB>e2` rows of undetected pairs. A first line starting with
    /// `e1<TAB>` is treated as a header. Entities are normalized with `table`.
    pub fn load(
        gold: &Path,
        undetected: Option<&Path>,
        table: &NormalizationTable,
    ) -> Result<Self, EvalError> {
        let mut set = Self::new();
        for (line, cols) in read_rows(gold, 3)? {
            let correct = match cols[2].trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(EvalError::Parse {
                        path: gold.display().to_string(),
                        line,
                        message: format!("label must be 1 or 0, got {other:?}"),
                    })
                }
            };
            set.judge(
                &table.normalize_entity(&cols[0]),
                &table.normalize_entity(&cols[1]),
                correct,
            )?;
        }
        if let Some(path) = undetected {
            for (_, cols) in read_rows(path, 2)? {
                set.add_undetected(InstancePair::seed(
                    table.normalize_entity(&cols[0]),
                    table.normalize_entity(&cols[1]),
                ));
            }
        }
        Ok(set)
    }
}

fn read_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (idx == 0 && line.starts_with("e1\t")) {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(String::from).collect();
        if cols.len() != columns {
            return Err(EvalError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected {columns} columns, got {}", cols.len()),
            });
        }
        rows.push((idx + 1, cols));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub n_undetected: usize,
    pub total: usize,
}

impl EvalCounts {
    pub fn new(n_correct: usize, n_incorrect: usize, n_undetected: usize) -> Self {
        Self {
            n_correct,
            n_incorrect,
            n_undetected,
            total: n_correct + n_incorrect,
        }
    }

    /// Correct pairs that exist: found plus missed.
    pub fn actual(&self) -> usize {
        self.n_correct + self.n_undetected
    }
}

/// Tallies judgments over every extracted (non-seed) pair of the table.
pub fn score_instances(extracted: &InstanceTable, gold: &GoldSet) -> Result<EvalCounts, EvalError> {
    score_pairs(extracted.extracted().map(|r| &r.pair), gold)
}

pub fn score_pairs<'a, I>(pairs: I, gold: &GoldSet) -> Result<EvalCounts, EvalError>
where
    I: IntoIterator<Item = &'a InstancePair>,
{
    let mut counts = EvalCounts::default();
    for pair in pairs {
        match gold.judgment(&pair.e1, &pair.e2) {
            Some(true) => counts.n_correct += 1,
            Some(false) => counts.n_incorrect += 1,
            None => return Err(EvalError::MissingJudgment(pair.clone())),
        }
    }
    counts.total = counts.n_correct + counts.n_incorrect;
    counts.n_undetected = gold.undetected().len();
    Ok(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision N_c/T, recall N_c/(N_c+U_c) and their harmonic mean. Zero
/// denominators give 0.
pub fn compute_metrics(counts: &EvalCounts) -> Metrics {
    let precision = ratio(counts.n_correct, counts.total);
    let recall = ratio(counts.n_correct, counts.actual());
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f_measure,
    }
}

/// Rounds half away from zero to `decimals` places.
pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

pub fn confidence(stats: PatternStats) -> Result<f64, EvalError> {
    if stats.total() == 0 {
        return Err(EvalError::NoEvidence);
    }
    Ok(f64::from(stats.positive) / f64::from(stats.total()))
}

/// positive / (positive + negative).
pub fn pattern_confidence(pattern: &Pattern) -> Result<f64, EvalError> {
    confidence(pattern.stats)
}

pub fn is_reliable(confidence: f64) -> bool {
    confidence >= RELIABLE_CONFIDENCE
}

/// Credits every judged extracted row to the pattern recorded for it.
pub fn attribute_pattern_stats(
    table: &InstanceTable,
    gold: &GoldSet,
    patterns: &mut [Pattern],
) -> Result<(), EvalError> {
    for p in patterns.iter_mut() {
        p.stats = PatternStats::default();
    }
    for row in table.extracted() {
        let correct = gold
            .judgment(&row.pair.e1, &row.pair.e2)
            .ok_or_else(|| EvalError::MissingJudgment(row.pair.clone()))?;
        if let Some(p) = row.pattern_id.and_then(|id| patterns.get_mut(id)) {
            if correct {
                p.stats.positive += 1;
            } else {
                p.stats.negative += 1;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSummary {
    /// Mean confidence of the evaluated patterns of each group; `None` when
    /// a group has none.
    pub per_iteration: Vec<Option<f64>>,
    /// Mean of the per-group means.
    pub mean_of_iterations: Option<f64>,
    /// Mean over every distinct evaluated pattern of all groups.
    pub pooled: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Averages pattern confidence per group of pattern ids (one group per
/// iteration) and overall. Patterns without evidence are skipped.
pub fn average_confidence(patterns: &[Pattern], groups: &[Vec<PatternId>]) -> ConfidenceSummary {
    let conf = |id: &PatternId| patterns.get(*id).and_then(|p| pattern_confidence(p).ok());
    let per_iteration: Vec<Option<f64>> = groups
        .iter()
        .map(|ids| mean(&ids.iter().filter_map(conf).collect::<Vec<_>>()))
        .collect();
    let group_means: Vec<f64> = per_iteration.iter().flatten().copied().collect();
    let distinct: BTreeSet<PatternId> = groups.iter().flatten().copied().collect();
    let pooled: Vec<f64> = distinct.iter().filter_map(conf).collect();
    ConfidenceSummary {
        mean_of_iterations: mean(&group_means),
        pooled: mean(&pooled),
        per_iteration,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternScore {
    pub id: PatternId,
    pub pattern: String,
    pub positive: u32,
    pub negative: u32,
    pub confidence: Option<f64>,
    pub reliable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub relation: String,
    #[serde(rename = "T")]
    pub total: usize,
    #[serde(rename = "Nc")]
    pub n_correct: usize,
    #[serde(rename = "I")]
    pub n_incorrect: usize,
    #[serde(rename = "Uc")]
    pub n_undetected: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub per_pattern: Vec<PatternScore>,
    pub average_confidence: ConfidenceSummary,
}

impl MetricsReport {
    pub fn build(
        relation: &str,
        counts: EvalCounts,
        patterns: &[Pattern],
        groups: &[Vec<PatternId>],
    ) -> Self {
        let metrics = compute_metrics(&counts);
        let per_pattern = patterns
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let confidence = pattern_confidence(p).ok();
                PatternScore {
                    id,
                    pattern: p.to_string(),
                    positive: p.stats.positive,
                    negative: p.stats.negative,
                    confidence,
                    reliable: confidence.map(is_reliable),
                }
            })
            .collect();
        Self {
            relation: relation.to_string(),
            total: counts.total,
            n_correct: counts.n_correct,
            n_incorrect: counts.n_incorrect,
            n_undetected: counts.n_undetected,
            precision: metrics.precision,
            recall: metrics.recall,
            f_measure: metrics.f_measure,
            per_pattern,
            average_confidence: average_confidence(patterns, groups),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::Provenance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats(positive: u32, negative: u32) -> Pattern {
        let mut p = Pattern::new(
            Some(vec!["كتاب".into()]),
            Some(vec!["للشيخ".into()]),
            None,
            false,
        );
        p.stats = PatternStats { positive, negative };
        p
    }

    #[test]
    fn table7_rows_from_table5_counts() {
        let m = compute_metrics(&EvalCounts::new(134, 52, 54));
        assert_eq!(
            (round_to(m.precision, 2), round_to(m.recall, 2)),
            (0.72, 0.71)
        );
        let m = compute_metrics(&EvalCounts::new(106, 41, 21));
        assert_eq!(
            (
                round_to(m.precision, 2),
                round_to(m.recall, 2),
                round_to(m.f_measure, 2)
            ),
            (0.72, 0.83, 0.77)
        );
    }

    #[test]
    fn empty_run_metrics_are_zero() {
        assert_eq!(compute_metrics(&EvalCounts::default()), Metrics::default());
        let counts = score_instances(&InstanceTable::new(), &GoldSet::new()).unwrap();
        assert_eq!(counts, EvalCounts::default());
    }

    #[test]
    fn confidence_examples() {
        let c = pattern_confidence(&stats(2, 1)).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-12 && is_reliable(c));
        assert_eq!(pattern_confidence(&stats(8, 2)).unwrap(), 0.8);
        let c = pattern_confidence(&stats(0, 5)).unwrap();
        assert_eq!(c, 0.0);
        assert!(!is_reliable(c));
        assert!(matches!(
            pattern_confidence(&stats(0, 0)),
            Err(EvalError::NoEvidence)
        ));
    }

    #[test]
    fn average_confidence_modes() {
        let ps = vec![stats(8, 2)];
        let s = average_confidence(&ps, &[vec![0]]);
        assert_eq!(s.mean_of_iterations, Some(0.8));
        assert_eq!(s.pooled, Some(0.8));

        // group means 0.7 and 0.8
        let ps = vec![
            stats(7, 3),
            stats(8, 2),
            stats(9, 1),
            stats(7, 3),
            stats(0, 0),
        ];
        let s = average_confidence(&ps, &[vec![0], vec![1, 2, 3, 4]]);
        let it = s
            .per_iteration
            .iter()
            .map(|m| round_to(m.unwrap(), 10))
            .collect::<Vec<_>>();
        assert_eq!(it, [0.7, 0.8]);
        assert!((s.mean_of_iterations.unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(round_to(s.mean_of_iterations.unwrap(), 1), 0.8);
        assert!((s.pooled.unwrap() - 3.1 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn missing_judgment_is_reported() {
        let mut t = InstanceTable::new();
        t.insert(
            InstancePair::new("نجيب محفوظ", "الثلاثيه", Provenance::Extracted(1)),
            None,
        );
        let err = score_instances(&t, &GoldSet::new()).unwrap_err();
        assert!(matches!(err, EvalError::MissingJudgment(p) if p.e1 == "نجيب محفوظ"));
    }

    #[test]
    fn seeds_are_not_scored() {
        let mut t = InstanceTable::new();
        t.insert(InstancePair::seed("نجيب محفوظ", "الثلاثيه"), None);
        assert_eq!(score_instances(&t, &GoldSet::new()).unwrap().total, 0);
    }

    #[test]
    fn conflicting_judgments_rejected() {
        let mut g = GoldSet::new();
        g.judge("a", "b", true).unwrap();
        g.judge("a", "b", true).unwrap();
        assert!(g.judge("a", "b", false).is_err());
    }

    #[test]
    fn random_judgments_match_direct_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut table = InstanceTable::new();
            let mut gold = GoldSet::new();
            let labels: Vec<bool> = (0..30).map(|_| rng.gen()).collect();
            for (i, &label) in labels.iter().enumerate() {
                let e1 = format!("p{i} q");
                table.insert(
                    InstancePair::new(e1.as_str(), "x y", Provenance::Extracted(1)),
                    None,
                );
                gold.judge(&e1, "x y", label).unwrap();
            }
            let missed = rng.gen_range(0..10);
            for i in 0..missed {
                gold.add_undetected(InstancePair::seed(format!("u{i} v"), "x y"));
            }
            let c = score_instances(&table, &gold).unwrap();
            let correct = labels.iter().filter(|&&l| l).count();
            assert_eq!(c, EvalCounts::new(correct, 30 - correct, missed));
        }
    }

    #[test]
    fn attribution_counts_per_pattern() {
        let mut t = InstanceTable::new();
        let mut g = GoldSet::new();
        for (i, (pid, ok)) in [(0, true), (0, true), (0, false), (1, false)]
            .into_iter()
            .enumerate()
        {
            let e1 = format!("a{i} b");
            t.insert(
                InstancePair::new(e1.as_str(), "c d", Provenance::Extracted(1)),
                Some(pid),
            );
            g.judge(&e1, "c d", ok).unwrap();
        }
        let mut ps = vec![stats(0, 0), stats(0, 0)];
        attribute_pattern_stats(&t, &g, &mut ps).unwrap();
        assert_eq!(
            ps[0].stats,
            PatternStats {
                positive: 2,
                negative: 1
            }
        );
        assert_eq!(
            ps[1].stats,
            PatternStats {
                positive: 0,
                negative: 1
            }
        );
    }

    proptest! {
        #[test]
        fn metrics_bounded(nc in 0usize..500, i in 0usize..500, uc in 0usize..500) {
            let m = compute_metrics(&EvalCounts::new(nc, i, uc));
            for v in [m.precision, m.recall, m.f_measure] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if m.precision > 0.0 && m.recall > 0.0 {
                prop_assert!(m.f_measure <= m.precision.max(m.recall) + 1e-12);
                prop_assert!(m.f_measure >= m.precision.min(m.recall) - 1e-12);
            }
        }

        #[test]
        fn adding_a_correct_instance_is_monotone(nc in 0usize..300, i in 0usize..300, uc in 0usize..300) {
            let before = compute_metrics(&EvalCounts::new(nc, i, uc));
            let after = compute_metrics(&EvalCounts::new(nc + 1, i, uc));
            prop_assert!(after.precision * (nc + i + 1) as f64 >= before.precision * (nc + i) as f64 - 1e-9);
            prop_assert!(after.recall >= before.recall - 1e-12);
        }

        #[test]
        fn confidence_monotone(pos in 0u32..100, neg in 0u32..100) {
            prop_assume!(pos + neg > 0);
            let c = confidence(PatternStats { positive: pos, negative: neg }).unwrap();
            let more_pos = confidence(PatternStats { positive: pos + 1, negative: neg }).unwrap();
            let more_neg = confidence(PatternStats { positive: pos, negative: neg + 1 }).unwrap();
            prop_assert!(more_pos >= c);
            prop_assert!(more_neg <= c);
        }
    }
}
