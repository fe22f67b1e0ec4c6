//! Text cleanup and featurisation.
//!
//! Comments go through [`Normalizer::normalize`] (lowercase, noise removal,
//! whitespace collapse), [`tokenize`] and [`remove_stopwords`]. Token lists
//! then feed two representations: token-id sequences over a [`Vocabulary`]
//! for the neural model, and TF-IDF vectors ([`TfIdfModel`]) for the
//! classical learners. Both are fitted on training data only.

mod tfidf;
mod vocab;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

pub use tfidf::{tfidf_fit, tfidf_transform, TfIdfModel, VECTORIZER_FORMAT};
pub use vocab::{encode, fit_vocab, EncodedSequence, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bad vocabulary settings: {0}")]
    BadConfig(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid vectorizer document: {0}")]
    BadDocument(String),
}

pub type Result<T, E = TextprepError> = std::result::Result<T, E>;

/// Stopwords attested for Hausa review text.
pub const DEFAULT_STOPWORDS: [&str; 5] = ["a", "ni", "to", "su", "an"];

/// One class of noise removed during normalization, applied in list order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripRule {
    /// Whole whitespace-delimited tokens starting with `@`.
    Usernames,
    /// Unicode categories So and Sk.
    Emoji,
    /// `@` and `#`.
    Symbols,
    /// Unicode punctuation categories (P*).
    Punctuation,
    /// Unicode number categories (N*).
    Digits,
}

impl StripRule {
    pub const DEFAULT_ORDER: [StripRule; 5] = [
        StripRule::Usernames,
        StripRule::Emoji,
        StripRule::Symbols,
        StripRule::Punctuation,
        StripRule::Digits,
    ];

    fn removes(self, c: char) -> bool {
        use GeneralCategory::*;
        match self {
            StripRule::Usernames => false,
            StripRule::Emoji => matches!(get_general_category(c), OtherSymbol | ModifierSymbol),
            StripRule::Symbols => c == '@' || c == '#',
            StripRule::Punctuation => matches!(
                get_general_category(c),
                ConnectorPunctuation
                    | DashPunctuation
                    | OpenPunctuation
                    | ClosePunctuation
                    | InitialPunctuation
                    | FinalPunctuation
                    | OtherPunctuation
            ),
            StripRule::Digits => matches!(
                get_general_category(c),
                DecimalNumber | LetterNumber | OtherNumber
            ),
        }
    }
}

/// Lowercases and strips noise from comment text.
///
/// After the strip rules run, anything that is not a letter (or a combining
/// mark attached to one), whitespace, or a member of `retain` is dropped, so
/// the output alphabet is closed and normalization is idempotent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub stopwords: BTreeSet<String>,
    pub strip: Vec<StripRule>,
    #[serde(default)]
    pub retain: Vec<char>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            strip: StripRule::DEFAULT_ORDER.to_vec(),
            retain: Vec::new(),
        }
    }
}

impl Normalizer {
    pub fn with_stopwords<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Normalizer {
            stopwords: stopwords.into_iter().map(|s| s.as_ref().to_lowercase()).collect(),
            ..Normalizer::default()
        }
    }

    pub fn normalize(&self, text: &str) -> String {
        let mut s = text.to_lowercase();
        for &rule in &self.strip {
            s = match rule {
                StripRule::Usernames => s
                    .split_whitespace()
                    .filter(|tok| !tok.starts_with('@'))
                    .collect::<Vec<_>>()
                    .join(" "),
                _ => s.chars().filter(|&c| !rule.removes(c)).collect(),
            };
        }

        let mut kept = String::with_capacity(s.len());
        let mut after_letter = false;
        for c in s.chars() {
            if c.is_whitespace() {
                kept.push(' ');
                after_letter = false;
            } else if c.is_alphabetic() {
                kept.push(c);
                after_letter = true;
            } else if is_mark(c) && after_letter {
                kept.push(c);
            } else if self.retain.contains(&c) {
                kept.push(c);
                after_letter = false;
            }
        }
        kept.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    /// normalize → tokenize → remove stopwords.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        remove_stopwords(tokenize(&self.normalize(text)), self)
    }
}

fn is_mark(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::NonspacingMark | GeneralCategory::SpacingMark | GeneralCategory::EnclosingMark
    )
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn remove_stopwords(tokens: Vec<String>, nz: &Normalizer) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !nz.stopwords.contains(t))
        .collect()
}

/// Parses a stopword list: one token per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| TextprepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_stopwords(&text))
}
