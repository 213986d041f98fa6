//! Normalization and line segmentation of raw search summaries.
//!
//! Normalization works line by line: every character is first folded through
//! the table's character map, then anything that is not an Arabic letter is
//! deleted (punctuation, digits, Latin letters, diacritics, tatweel). Web
//! stop-words are removed as whole tokens and horizontal whitespace is
//! collapsed. Line breaks survive so that [`segment`] can split one summary
//! line into one candidate sentence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Summary;

const TATWEEL: char = '\u{0640}';

/// Default web stop-words, given in their unnormalized spelling.
pub const DEFAULT_WEB_STOPWORDS: [&str; 3] = ["مجاناً", "موقع", "تحميل"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read normalization table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid normalization table {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Which direction the ta marbuta / ha pair is folded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaMarbutaFolding {
    /// ة → ه (conventional).
    ToHa,
    /// ه → ة.
    ToTaMarbuta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationTable {
    char_map: BTreeMap<char, char>,
    web_stopwords: BTreeSet<String>,
}

#[derive(Deserialize)]
struct TableFile {
    #[serde(default)]
    char_map: BTreeMap<String, String>,
    #[serde(default)]
    web_stopwords: Vec<String>,
}

impl Default for NormalizationTable {
    fn default() -> Self {
        Self::with_folding(TaMarbutaFolding::ToHa)
    }
}

impl NormalizationTable {
    pub fn with_folding(folding: TaMarbutaFolding) -> Self {
        let mut char_map = BTreeMap::new();
        char_map.insert('أ', 'ا');
        char_map.insert('إ', 'ا');
        char_map.insert('آ', 'ا');
        char_map.insert('ى', 'ي');
        match folding {
            TaMarbutaFolding::ToHa => char_map.insert('ة', 'ه'),
            TaMarbutaFolding::ToTaMarbuta => char_map.insert('ه', 'ة'),
        };
        let mut table = Self {
            char_map,
            web_stopwords: BTreeSet::new(),
        };
        table.extend_stopwords(DEFAULT_WEB_STOPWORDS);
        table
    }

    /// Builds a table from an explicit map and stop-word list. Stop-words are
    /// stored in normalized form so they compare against normalized tokens.
    pub fn new<I, S>(char_map: BTreeMap<char, char>, web_stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table = Self {
            char_map,
            web_stopwords: BTreeSet::new(),
        };
        table.extend_stopwords(web_stopwords);
        table
    }

    /// Loads a JSON table file `{char_map: {..}, web_stopwords: [..]}`.
    pub fn from_json_file(path: &Path) -> Result<Self, TableError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|message| TableError::Invalid {
            path: display,
            message,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut char_map = BTreeMap::new();
        for (from, to) in file.char_map {
            let from = single_char(&from)
                .ok_or_else(|| format!("map key {from:?} is not one character"))?;
            let to =
                single_char(&to).ok_or_else(|| format!("map value {to:?} is not one character"))?;
            char_map.insert(from, to);
        }
        Ok(Self::new(char_map, file.web_stopwords))
    }

    pub fn extend_stopwords<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for word in words {
            let folded: String = word
                .as_ref()
                .chars()
                .filter_map(|c| self.fold_char(c))
                .collect();
            if !folded.is_empty() {
                self.web_stopwords.insert(folded);
            }
        }
    }

    pub fn char_map(&self) -> &BTreeMap<char, char> {
        &self.char_map
    }

    pub fn web_stopwords(&self) -> &BTreeSet<String> {
        &self.web_stopwords
    }

    /// Maps one character, returning `None` when it is stripped.
    fn fold_char(&self, c: char) -> Option<char> {
        let c = self.char_map.get(&c).copied().unwrap_or(c);
        is_arabic_letter(c).then_some(c)
    }

    /// Normalizes a single line (no line breaks in the output).
    pub fn normalize_line(&self, line: &str) -> String {
        let mut out = String::with_capacity(line.len());
        for word in line.split_whitespace() {
            let folded: String = word.chars().filter_map(|c| self.fold_char(c)).collect();
            if folded.is_empty() || self.web_stopwords.contains(&folded) {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&folded);
        }
        out
    }

    /// Normalizes a single entity string. Entities are single-line, so this
    /// is [`Self::normalize_line`] without stop-word removal.
    pub fn normalize_entity(&self, entity: &str) -> String {
        entity
            .split_whitespace()
            .map(|w| {
                w.chars()
                    .filter_map(|c| self.fold_char(c))
                    .collect::<String>()
            })
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut chars = s.chars();
    let c = chars.next()?;
    chars.next().is_none().then_some(c)
}

fn is_arabic_diacritic(c: char) -> bool {
    matches!(c,
        '\u{0610}'..='\u{061A}'
        | '\u{064B}'..='\u{065F}'
        | '\u{0670}'
        | '\u{06D6}'..='\u{06ED}'
        | '\u{08D3}'..='\u{08FF}')
}

/// True for characters that survive normalization.
pub fn is_arabic_letter(c: char) -> bool {
    let in_block = matches!(c,
        '\u{0600}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08FF}'
        | '\u{FB50}'..='\u{FDFF}'
        | '\u{FE70}'..='\u{FEFF}');
    in_block && c != TATWEEL && !is_arabic_diacritic(c) && c.is_alphabetic()
}

/// Normalizes raw summary text. Each input line is normalized separately;
/// lines that end up empty are dropped.
pub fn normalize(raw: &str, table: &NormalizationTable) -> String {
    raw.lines()
        .map(|line| table.normalize_line(line))
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Where a sentence came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceRef {
    pub query_text: String,
    pub rank: u32,
}

/// One candidate sentence: the tokens of one normalized summary line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub source: Option<SourceRef>,
}

impl Sentence {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
            source: None,
        }
    }

    /// Splits on whitespace without normalizing.
    pub fn parse(text: &str) -> Self {
        Self::from_tokens(text.split_whitespace())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits normalized text into sentences, one per non-empty line.
pub fn segment(normalized: &str) -> Vec<Sentence> {
    normalized
        .lines()
        .map(Sentence::parse)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Normalizes and segments a fetched summary, tagging each sentence with its source.
pub fn preprocess(summary: &Summary, table: &NormalizationTable) -> Vec<Sentence> {
    let source = SourceRef {
        query_text: summary.query_text.clone(),
        rank: summary.rank,
    };
    segment(&normalize(&summary.raw_text, table))
        .into_iter()
        .map(|mut s| {
            s.source = Some(source.clone());
            s
        })
        .collect()
}
