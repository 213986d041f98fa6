//! Instance extraction: cut sentences along a pattern's anchor words, then
//! clean up the candidate pairs.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::patterns::{InstancePair, Pattern, Provenance};
use crate::textproc::{Sentence, SourceRef};

/// Index of a pattern in the run's pattern table.
pub type PatternId = usize;

/// Single-word entities must start with this to be kept.
pub const DEFINITE_ARTICLE: &str = "ال";

pub const DEFAULT_EXTENSION_PARTICLES: [&str; 3] = ["عبد", "بن", "ابو"];

/// Length limits shared by slot filling and filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRules {
    pub e1_max_words: usize,
    pub e2_max_words: usize,
    /// A third e1 word from this list allows exactly one more word.
    pub extension_particles: BTreeSet<String>,
}

impl Default for EntityRules {
    fn default() -> Self {
        Self {
            e1_max_words: 3,
            e2_max_words: 4,
            extension_particles: DEFAULT_EXTENSION_PARTICLES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl EntityRules {
    /// Whether `words` is an acceptable e1 length.
    pub fn e1_length_ok<S: AsRef<str>>(&self, words: &[S]) -> bool {
        let n = words.len();
        if n <= self.e1_max_words {
            return true;
        }
        n == self.e1_max_words + 1
            && self.e1_max_words >= 1
            && self
                .extension_particles
                .contains(words[self.e1_max_words - 1].as_ref())
    }

    fn slot_ok<S: AsRef<str>>(&self, slot: Slot, words: &[S]) -> bool {
        !words.is_empty()
            && match slot {
                Slot::E1 => self.e1_length_ok(words),
                Slot::E2 => words.len() <= self.e2_max_words,
            }
    }

    fn slot_max(&self, slot: Slot) -> usize {
        match slot {
            Slot::E1 => self.e1_max_words + 1,
            Slot::E2 => self.e2_max_words,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    E1,
    E2,
}

/// `<prefix, slot, middle, slot, suffix>` with slots ordered by the pattern's
/// order flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchTemplate {
    pub pattern_id: PatternId,
    pub prefix: Option<Vec<String>>,
    pub middle: Option<Vec<String>>,
    pub suffix: Option<Vec<String>>,
    pub order: bool,
    pub rules: EntityRules,
}

impl MatchTemplate {
    pub fn from_pattern(pattern_id: PatternId, pattern: &Pattern, rules: EntityRules) -> Self {
        Self {
            pattern_id,
            prefix: pattern.prefix.clone(),
            middle: pattern.middle.clone(),
            suffix: pattern.suffix.clone(),
            order: pattern.order,
            rules,
        }
    }

    fn slots(&self) -> (Slot, Slot) {
        if self.order {
            (Slot::E1, Slot::E2)
        } else {
            (Slot::E2, Slot::E1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateInstance {
    pub pair: InstancePair,
    pub pattern_id: PatternId,
    pub e1_span: Range<usize>,
    pub e2_span: Range<usize>,
    pub source: Option<SourceRef>,
}

fn matches_at(tokens: &[String], at: usize, words: &[String]) -> bool {
    tokens.len() >= at + words.len() && tokens[at..at + words.len()] == *words
}

/// Shortest run starting at `start` that is followed by `anchor`, if it
/// satisfies the slot's limits.
fn anchored_run(
    tokens: &[String],
    start: usize,
    anchor: &[String],
    slot: Slot,
    rules: &EntityRules,
) -> Option<Range<usize>> {
    let max = rules.slot_max(slot);
    let len = (1..=max)
        .take_while(|len| start + len + anchor.len() <= tokens.len())
        .find(|len| matches_at(tokens, start + len, anchor))?;
    let run = start..start + len;
    rules.slot_ok(slot, &tokens[run.clone()]).then_some(run)
}

/// Run from `start` to the end of the sentence, trimmed to the slot's limits.
fn trailing_run(
    tokens: &[String],
    start: usize,
    slot: Slot,
    rules: &EntityRules,
) -> Option<Range<usize>> {
    let available = tokens.len().saturating_sub(start);
    let len = (1..=available.min(rules.slot_max(slot)))
        .rev()
        .find(|&len| rules.slot_ok(slot, &tokens[start..start + len]))?;
    Some(start..start + len)
}

/// Every match of the template in the sentence. Slots bounded by an anchor
/// take the shortest run before that anchor; a slot at the end of the
/// template (null suffix) takes as many words as its limit allows.
pub fn match_pattern(template: &MatchTemplate, sentence: &Sentence) -> Vec<CandidateInstance> {
    let (Some(prefix), Some(middle)) = (&template.prefix, &template.middle) else {
        return Vec::new();
    };
    let tokens = &sentence.tokens;
    let rules = &template.rules;
    let (first_slot, second_slot) = template.slots();
    let mut out = Vec::new();

    for start in 0..tokens.len() {
        if !matches_at(tokens, start, prefix) {
            continue;
        }
        let first_start = start + prefix.len();
        let Some(first) = anchored_run(tokens, first_start, middle, first_slot, rules) else {
            continue;
        };
        let second_start = first.end + middle.len();
        let second = match &template.suffix {
            Some(suffix) => anchored_run(tokens, second_start, suffix, second_slot, rules),
            None => trailing_run(tokens, second_start, second_slot, rules),
        };
        let Some(second) = second else { continue };

        let (e1_span, e2_span) = if template.order {
            (first, second)
        } else {
            (second, first)
        };
        out.push(CandidateInstance {
            pair: InstancePair::new(
                tokens[e1_span.clone()].join(" "),
                tokens[e2_span.clone()].join(" "),
                Provenance::Extracted(0),
            ),
            pattern_id: template.pattern_id,
            e1_span,
            e2_span,
            source: sentence.source.clone(),
        });
    }
    out
}

/// A pair that survived filtering with the patterns that produced it, in
/// order of first contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedInstance {
    pub pair: InstancePair,
    pub pattern_ids: Vec<PatternId>,
}

impl AcceptedInstance {
    pub fn first_pattern(&self) -> Option<PatternId> {
        self.pattern_ids.first().copied()
    }
}

fn push_unique(ids: &mut Vec<PatternId>, more: &[PatternId]) {
    for id in more {
        if !ids.contains(id) {
            ids.push(*id);
        }
    }
}

/// Collapses entries with equal (e1, e2), keeping the first position.
fn dedup(items: Vec<AcceptedInstance>) -> Vec<AcceptedInstance> {
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<AcceptedInstance> = Vec::new();
    for item in items {
        let key = (item.pair.e1.clone(), item.pair.e2.clone());
        match index.get(&key) {
            Some(&i) => push_unique(&mut out[i].pattern_ids, &item.pattern_ids),
            None => {
                index.insert(key, out.len());
                out.push(item);
            }
        }
    }
    out
}

fn is_token_prefix(short: &[&str], long: &[&str]) -> bool {
    short.len() <= long.len() && long[..short.len()] == *short
}

/// Pairs sharing e2 where one e1 extends another collapse to the shorter e1.
fn collapse_extensions(items: Vec<AcceptedInstance>) -> Vec<AcceptedInstance> {
    let mut by_e2: HashMap<&str, Vec<Vec<&str>>> = HashMap::new();
    for item in &items {
        by_e2
            .entry(item.pair.e2.as_str())
            .or_default()
            .push(item.pair.e1_tokens());
    }
    let canonical: Vec<String> = items
        .iter()
        .map(|item| {
            let own = item.pair.e1_tokens();
            by_e2[item.pair.e2.as_str()]
                .iter()
                .filter(|other| is_token_prefix(other, &own))
                .min_by_key(|other| other.len())
                .map(|other| other.join(" "))
                .unwrap_or_else(|| item.pair.e1.clone())
        })
        .collect();
    let rewritten = items
        .into_iter()
        .zip(canonical)
        .map(|(mut item, e1)| {
            item.pair.e1 = e1;
            item
        })
        .collect();
    dedup(rewritten)
}

fn single_word_ok(entity: &str) -> bool {
    let mut words = entity.split_whitespace();
    match (words.next(), words.next()) {
        (Some(word), None) => word.starts_with(DEFINITE_ARTICLE),
        (Some(_), Some(_)) => true,
        (None, _) => false,
    }
}

/// Applies the duplicate, extension, e1-length and single-word rules in that
/// order, keeping the first-seen position of every surviving pair.
pub fn filter_candidates(
    candidates: &[CandidateInstance],
    rules: &EntityRules,
) -> Vec<AcceptedInstance> {
    let items = candidates
        .iter()
        .map(|c| AcceptedInstance {
            pair: c.pair.clone(),
            pattern_ids: vec![c.pattern_id],
        })
        .collect();
    let items = dedup(items);
    let items = collapse_extensions(items);
    items
        .into_iter()
        .filter(|item| rules.e1_length_ok(&item.pair.e1_tokens()))
        .filter(|item| single_word_ok(&item.pair.e1) && single_word_ok(&item.pair.e2))
        .collect()
}

pub fn filter_instances(
    candidates: &[CandidateInstance],
    rules: &EntityRules,
) -> Vec<InstancePair> {
    filter_candidates(candidates, rules)
        .into_iter()
        .map(|a| a.pair)
        .collect()
}
