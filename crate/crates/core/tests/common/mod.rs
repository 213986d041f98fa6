//! Deterministic generator for the author-book fixture corpus.
//!
//! The corpus is engineered so that a run seeded with four pairs follows a
//! known trajectory:
//!
//! | iteration | P_total | P_detect | R  | N   | T   |
//! |-----------|---------|----------|----|-----|-----|
//! | 1         | 23      | 9        | 2  | 64  | 66  |
//! | 2         | 92      | 24       | 25 | 120 | 186 |
//!
//! and the gold files score 134 correct, 52 incorrect and 54 undetected.
//! Every pattern owns its context words, so patterns never merge across
//! groups and templates never match each other's sentences. Noise lines
//! exercise normalization, the gap limit and every filter rule without
//! moving the counts.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relboot::corpus::{SnapshotMetadata, SnapshotStore};
use relboot::{build_instance_query, build_pattern_query, InstancePair, Pattern};

pub const FIXTURE_FILES: [&str; 5] = [
    "config.toml",
    "seeds.tsv",
    "snapshot.jsonl",
    "gold.tsv",
    "undetected.tsv",
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("author_book")
}

const ALPHABET: [char; 26] = [
    'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف',
    'ق', 'ك', 'م', 'ن', 'ه', 'و', 'ي',
];
const STOPWORDS: [&str; 3] = ["مجانا", "موقع", "تحميل"];

type Pair = (String, String);

#[derive(Clone, Debug)]
struct Spec {
    prefix: Vec<String>,
    middle: Vec<String>,
    suffix: Option<Vec<String>>,
    order: bool,
}

impl Spec {
    fn pattern(&self) -> Pattern {
        Pattern::new(
            Some(self.prefix.clone()),
            Some(self.middle.clone()),
            self.suffix.clone(),
            self.order,
        )
    }

    fn query(&self) -> String {
        build_pattern_query(&self.pattern(), 20)
            .unwrap()
            .text()
            .to_string()
    }

    /// `lead prefix first middle second suffix tail`, where `first` is e1
    /// when the order flag is set.
    fn sentence(
        &self,
        lead: &[String],
        e1: &str,
        e2: &str,
        suffix: Option<&[String]>,
        tail: &[String],
    ) -> String {
        let (first, second) = if self.order { (e1, e2) } else { (e2, e1) };
        let mut words: Vec<String> = lead.to_vec();
        words.extend(self.prefix.iter().cloned());
        words.push(first.to_string());
        words.extend(self.middle.iter().cloned());
        words.push(second.to_string());
        if let Some(s) = suffix {
            words.extend(s.iter().cloned());
            words.extend(tail.iter().cloned());
        }
        words.join(" ")
    }
}

struct Gen {
    rng: ChaCha8Rng,
    next: usize,
    store: SnapshotStore,
}

impl Gen {
    fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0x5eed_b00c),
            next: 0,
            store: SnapshotStore::new(SnapshotMetadata {
                provider: "fixture".into(),
                captured: None,
            }),
        }
    }

    /// A word never produced before: four letters, spread over the space by
    /// a multiplicative step.
    fn word(&mut self) -> String {
        loop {
            let mut n = (self.next * 7919 + 104_729) % 456_976;
            self.next += 1;
            let mut w = String::new();
            for _ in 0..4 {
                w.push(ALPHABET[n % 26]);
                n /= 26;
            }
            if !STOPWORDS.contains(&w.as_str()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }

    fn entity(&mut self) -> String {
        self.words(2).join(" ")
    }

    fn pair(&mut self) -> Pair {
        (self.entity(), self.entity())
    }

    fn spec(&mut self, suffix: bool) -> Spec {
        let prefix_len = self.rng.gen_range(1..=2);
        let middle_len = self.rng.gen_range(1..=3);
        let suffix_len = self.rng.gen_range(1..=3);
        let order = self.rng.gen_bool(0.75);
        Spec {
            prefix: self.words(prefix_len),
            middle: self.words(middle_len),
            suffix: suffix.then(|| self.words(suffix_len)),
            order,
        }
    }

    /// Leading words are allowed only before a two-word prefix, because the
    /// occurrence prefix keeps the last two words before the first entity.
    fn lead(&mut self, spec: &Spec) -> Vec<String> {
        if spec.prefix.len() == 2 && self.rng.gen_bool(0.5) {
            let n = self.rng.gen_range(1..=2);
            self.words(n)
        } else {
            Vec::new()
        }
    }

    /// Trailing words are allowed only after a full three-word suffix.
    fn tail(&mut self, suffix: &[String]) -> Vec<String> {
        if suffix.len() == 3 && self.rng.gen_bool(0.5) {
            self.words(1)
        } else {
            Vec::new()
        }
    }

    /// Adds surface noise that normalization removes: punctuation, digits,
    /// Latin words and diacritics.
    fn decorate(&mut self, line: &str) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!("{line} ..."),
            1 => format!("2011 - {line}، (PDF)"),
            2 => line.replacen(' ', "\u{064E} ", 1),
            _ => line.to_string(),
        }
    }

    fn push(&mut self, query: &str, line: String) {
        let line = self.decorate(&line);
        self.store.push(query, line);
    }

    /// Summaries for the instance query of `pair`: one per occurrence plus
    /// lines that yield no occurrence.
    fn seed_results(&mut self, pair: &Pair, occurrences: &[(Spec, Option<Vec<String>>)]) {
        let query = instance_query(pair);
        for (spec, suffix) in occurrences {
            let lead = self.lead(spec);
            let tail = suffix.as_ref().map(|s| self.tail(s)).unwrap_or_default();
            let line = spec.sentence(&lead, &pair.0, &pair.1, suffix.as_deref(), &tail);
            self.push(&query, line);
        }
        let gap = self.words(4).join(" ");
        let far = format!("{} {} {}", pair.0, gap, pair.1);
        self.push(&query, far);
        self.store.push(&query, "Free download 2012 PDF");
    }

    /// A single occurrence of `spec` with its own suffix.
    fn own_occurrence(spec: &Spec) -> (Spec, Option<Vec<String>>) {
        (spec.clone(), spec.suffix.clone())
    }

    /// Pattern-query results that produce `pairs` and nothing else.
    fn detecting_results(&mut self, spec: &Spec, pairs: &[Pair]) {
        let query = spec.query();
        for (i, (e1, e2)) in pairs.iter().enumerate() {
            let lead = self.lead(spec);
            let tail = spec
                .suffix
                .as_ref()
                .map(|s| self.tail(s))
                .unwrap_or_default();
            let line = spec.sentence(&lead, e1, e2, spec.suffix.as_deref(), &tail);
            self.push(&query, line.clone());
            match i % 4 {
                0 => {
                    // duplicate of an accepted pair
                    self.push(&query, line);
                }
                1 => {
                    // longer e1 with the same e2 collapses onto the planted e1
                    let longer = format!("{e1} {}", self.word());
                    let line = spec.sentence(&[], &longer, e2, spec.suffix.as_deref(), &[]);
                    self.push(&query, line);
                }
                2 => {
                    // single word without the article is rejected
                    let (w, other) = (self.word(), self.entity());
                    let line = spec.sentence(&[], &w, &other, spec.suffix.as_deref(), &[]);
                    self.push(&query, line);
                }
                _ => {}
            }
        }
    }

    /// Pattern-query results that never fill both slots.
    fn silent_results(&mut self, spec: &Spec, variant: usize) {
        let query = spec.query();
        match variant % 3 {
            0 => {}
            1 => {
                // prefix present, middle missing
                let mut words = spec.prefix.clone();
                words.extend(self.words(5));
                self.push(&query, words.join(" "));
            }
            _ => {
                // run between prefix and middle longer than any entity
                let mut words = spec.prefix.clone();
                words.extend(self.words(5));
                words.extend(spec.middle.iter().cloned());
                words.extend(self.words(2));
                self.push(&query, words.join(" "));
            }
        }
    }
}

fn instance_query(pair: &Pair) -> String {
    build_instance_query(&InstancePair::seed(pair.0.clone(), pair.1.clone()), 20)
        .unwrap()
        .text()
        .to_string()
}

pub struct Fixture {
    pub seeds: Vec<Pair>,
    pub store: SnapshotStore,
    /// Every extracted pair with its judgment.
    pub gold: Vec<(String, String, bool)>,
    pub undetected: Vec<Pair>,
}

/// Builds the author-book corpus.
pub fn author_book() -> Fixture {
    let mut g = Gen::new();
    let seeds: Vec<Pair> = (0..4).map(|_| g.pair()).collect();

    // Iteration 1. Seed 0 shows 13 occurrences folding into 5 patterns; the
    // first group differs only in suffix, so its pattern has none.
    let mut iter1: Vec<Spec> = Vec::new();
    let mut occ: Vec<(Spec, Option<Vec<String>>)> = Vec::new();
    for (k, size) in [3usize, 3, 3, 2, 2].into_iter().enumerate() {
        let mut spec = g.spec(true);
        if k == 0 {
            spec.suffix = None;
            for _ in 0..size {
                let n = g.rng.gen_range(1..=2);
                occ.push((spec.clone(), Some(g.words(n))));
            }
        } else {
            for _ in 0..size {
                occ.push(Gen::own_occurrence(&spec));
            }
        }
        iter1.push(spec);
    }
    let mut shuffled = occ.clone();
    shuffled.shuffle(&mut g.rng);
    g.seed_results(&seeds[0], &shuffled);
    for seed in &seeds[1..] {
        let specs: Vec<Spec> = (0..6).map(|i| g.spec(i % 3 != 2)).collect();
        let occ: Vec<_> = specs.iter().map(Gen::own_occurrence).collect();
        g.seed_results(seed, &occ);
        iter1.extend(specs);
    }
    assert_eq!(iter1.len(), 23);

    // Nine detecting patterns extract 6 x 7 + 3 x 8 = 66 pairs, two of them
    // seeds.
    let detecting1 = [0usize, 2, 4, 5, 8, 12, 14, 17, 22];
    let sizes1 = [7usize, 7, 7, 7, 7, 7, 8, 8, 8];
    let mut fresh1: Vec<Pair> = (0..64).map(|_| g.pair()).collect();
    let mut extracted1: Vec<Pair> = Vec::new();
    let mut pool = fresh1.clone().into_iter();
    let mut silent = 0;
    for (id, spec) in iter1.clone().iter().enumerate() {
        match detecting1.iter().position(|&d| d == id) {
            Some(slot) => {
                let mut pairs: Vec<Pair> = Vec::new();
                if slot == 3 {
                    pairs.push(seeds[1].clone());
                }
                if slot == 5 {
                    pairs.push(seeds[2].clone());
                }
                while pairs.len() < sizes1[slot] {
                    pairs.push(pool.next().unwrap());
                }
                g.detecting_results(spec, &pairs);
                extracted1.extend(pairs);
            }
            None => {
                g.silent_results(spec, silent);
                silent += 1;
            }
        }
    }
    assert!(pool.next().is_none());
    assert_eq!(extracted1.len(), 66);

    // Iteration 2. The 64 new pairs seed 92 patterns: the first 28 show two
    // patterns each, the rest one. One of them repeats a silent iteration-1
    // pattern.
    let recurring = iter1[1].clone();
    let mut iter2: Vec<Spec> = Vec::new();
    fresh1.sort();
    for (i, pair) in fresh1.iter().enumerate() {
        let count = if i < 28 { 2 } else { 1 };
        let mut specs: Vec<Spec> = (0..count).map(|j| g.spec((i + j) % 4 != 3)).collect();
        if i == 0 {
            specs[1] = recurring.clone();
        }
        let occ: Vec<_> = specs.iter().map(Gen::own_occurrence).collect();
        g.seed_results(pair, &occ);
        iter2.extend(specs.into_iter().filter(|s| s.query() != recurring.query()));
    }
    assert_eq!(iter2.len(), 91);

    // 24 detecting patterns extract 23 x 6 + 7 = 145 pairs: 23 pairs from
    // iteration 1, the two detected seeds and 120 new ones.
    let mut repeats: Vec<Pair> = fresh1.iter().step_by(2).take(23).cloned().collect();
    repeats.push(seeds[1].clone());
    repeats.push(seeds[2].clone());
    let fresh2: Vec<Pair> = (0..120).map(|_| g.pair()).collect();
    let mut incoming: Vec<Pair> = repeats.into_iter().chain(fresh2.iter().cloned()).collect();
    incoming.shuffle(&mut g.rng);
    let mut incoming = incoming.into_iter();
    for (k, spec) in iter2.iter().enumerate() {
        if k % 3 == 1 && k / 3 < 24 {
            let size = if k / 3 == 0 { 7 } else { 6 };
            let pairs: Vec<Pair> = incoming.by_ref().take(size).collect();
            g.detecting_results(spec, &pairs);
        } else {
            g.silent_results(spec, k);
        }
    }
    assert!(incoming.next().is_none());

    // Judgments: 52 of the 186 extracted pairs are wrong, spread evenly.
    let extracted: Vec<Pair> = extracted1.into_iter().chain(fresh2).collect();
    assert_eq!(extracted.len(), 186);
    let gold = extracted
        .into_iter()
        .enumerate()
        .map(|(k, (e1, e2))| {
            let wrong = (k + 1) * 52 / 186 > k * 52 / 186;
            (e1, e2, !wrong)
        })
        .collect();
    let undetected = (0..54).map(|_| g.pair()).collect();

    Fixture {
        seeds,
        store: g.store,
        gold,
        undetected,
    }
}

pub const CONFIG_TOML: &str = "relation_label = \"author-book\"
seeds = \"seeds.tsv\"
threshold = 100
top_k = 20

[provider]
kind = \"snapshot\"
path = \"snapshot.jsonl\"
";

impl Fixture {
    /// File name and contents of every fixture file.
    pub fn render(&self) -> Vec<(&'static str, String)> {
        let pairs = |rows: &[Pair]| {
            let mut s = String::from("e1\te2\n");
            for (e1, e2) in rows {
                s.push_str(&format!("{e1}\t{e2}\n"));
            }
            s
        };
        let mut gold = String::from("e1\te2\tlabel\n");
        for (e1, e2, ok) in &self.gold {
            gold.push_str(&format!("{e1}\t{e2}\t{}\n", if *ok { 1 } else { 0 }));
        }
        let mut snapshot = Vec::new();
        self.store.write_jsonl(&mut snapshot).unwrap();
        vec![
            ("config.toml", CONFIG_TOML.to_string()),
            ("seeds.tsv", pairs(&self.seeds)),
            ("snapshot.jsonl", String::from_utf8(snapshot).unwrap()),
            ("gold.tsv", gold),
            ("undetected.tsv", pairs(&self.undetected)),
        ]
    }

    pub fn write_to(&self, dir: &Path) {
        fs::create_dir_all(dir).unwrap();
        for (name, body) in self.render() {
            fs::write(dir.join(name), body).unwrap();
        }
    }
}

/// Copies the committed fixture into `dir`.
pub fn copy_fixture(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    for name in FIXTURE_FILES {
        fs::copy(fixture_dir().join(name), dir.join(name)).unwrap();
    }
}

pub fn relboot_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_relboot"))
}
