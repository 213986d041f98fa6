//! Semi-supervised extraction of binary relations (e1, e2) from Arabic
//! search-result summaries.
//!
//! Starting from a few seed pairs, each iteration searches for the seeds,
//! learns lexical patterns from the sentences that contain them, searches
//! again with those patterns and cuts new pairs out of the matching
//! sentences. The loop stops once enough distinct pairs are collected.
//!
//! * [`corpus`]: queries and summary providers (snapshot replay, HTTP)
//! * [`textproc`]: normalization and line segmentation
//! * [`patterns`]: occurrences and pattern induction
//! * [`extract`]: template matching and instance filtering
//! * [`bootstrap`]: the iteration loop and its persisted state
//! * [`eval`]: precision/recall/F and pattern confidence

pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod extract;
pub mod patterns;
pub mod textproc;

pub use bootstrap::{
    dedup_and_count, run, Bootstrapper, InstanceTable, IterationReport, RunConfig, RunOutcome,
    StopReason,
};
pub use corpus::{
    build_instance_query, build_pattern_query, Query, QueryKind, SearchProvider, SnapshotProvider,
    SnapshotStore, Summary,
};
pub use eval::{
    compute_metrics, pattern_confidence, score_instances, EvalCounts, GoldSet, Metrics,
};
pub use extract::{filter_instances, match_pattern, CandidateInstance, EntityRules, MatchTemplate};
pub use patterns::{
    build_occurrence, merge_occurrences, validate_sentence, ContextCaps, InstancePair, Occurrence,
    Pattern, Provenance,
};
pub use textproc::{normalize, segment, NormalizationTable, Sentence};
