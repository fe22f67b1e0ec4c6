use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Result, TextprepError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ids with `<pad>` = 0 and `<unk>` = 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabDoc", into = "VocabDoc")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_size: usize,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabDoc {
    tokens: Vec<String>,
    max_size: usize,
    min_freq: usize,
}

impl TryFrom<VocabDoc> for Vocabulary {
    type Error = String;

    fn try_from(doc: VocabDoc) -> Result<Self, String> {
        if doc.tokens.get(PAD).map(String::as_str) != Some(PAD_TOKEN)
            || doc.tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let index: HashMap<String, usize> = doc
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != doc.tokens.len() {
            return Err("duplicate vocabulary entry".into());
        }
        Ok(Vocabulary {
            tokens: doc.tokens,
            index,
            max_size: doc.max_size,
            min_freq: doc.min_freq,
        })
    }
}

impl From<Vocabulary> for VocabDoc {
    fn from(v: Vocabulary) -> Self {
        VocabDoc {
            tokens: v.tokens,
            max_size: v.max_size,
            min_freq: v.min_freq,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }
}

/// Keeps tokens seen at least `min_freq` times, most frequent first (ties
/// lexicographic), until the vocabulary holds `max_size` entries including
/// the two reserved ones.
pub fn fit_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize, min_freq: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(TextprepError::EmptyCorpus);
    }
    if max_size < 2 {
        return Err(TextprepError::BadConfig(format!(
            "max_size {max_size} leaves no room for <pad> and <unk>"
        )));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for t in doc {
            *freq.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(t, n)| n >= min_freq.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - 2);

    let tokens: Vec<String> = [PAD_TOKEN, UNK_TOKEN]
        .into_iter()
        .chain(ranked.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect();
    let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        tokens,
        index,
        max_size,
        min_freq,
    })
}

/// Fixed-length id sequence; positions at or past `true_length` hold PAD.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

/// Maps tokens to ids, truncating or padding at the tail to `len`.
///
/// Panics if `len == 0`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize) -> EncodedSequence {
    assert!(len >= 1, "sequence length must be positive");
    let mut ids: Vec<usize> = tokens
        .iter()
        .take(len)
        .map(|t| vocab.id(t.as_ref()).unwrap_or(UNK))
        .collect();
    let true_length = ids.len();
    ids.resize(len, PAD);
    EncodedSequence { ids, true_length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(spec: &[&str]) -> Vec<Vec<String>> {
        spec.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn min_freq_filters_rare_tokens() {
        let corpus = docs(&["a b c", "a b", "a"]);
        // frequency oracle: a=3, b=2, c=1
        let v = fit_vocab(&corpus, 100, 2).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "a", "b"]);
    }

    #[test]
    fn max_size_counts_reserved_entries() {
        let corpus = docs(&["t0 t1 t2 t3 t4 t5 t6 t7 t8 t9"]);
        let v = fit_vocab(&corpus, 3, 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(2), Some("t0"));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = fit_vocab(&docs(&["c b", "b c", "a"]), 10, 1).unwrap();
        assert_eq!(v.tokens(), [PAD_TOKEN, UNK_TOKEN, "b", "c", "a"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(fit_vocab::<String>(&[], 10, 1), Err(TextprepError::EmptyCorpus)));
    }

    #[test]
    fn encode_pads_truncates_and_maps_unknowns() {
        let v = fit_vocab(&docs(&["a b c d e f"]), 100, 1).unwrap();
        let e = encode(&["a", "b"], &v, 4);
        assert_eq!(e.ids, [v.id("a").unwrap(), v.id("b").unwrap(), PAD, PAD]);
        assert_eq!(e.true_length, 2);
        assert_eq!(encode(&["zzz"], &v, 2).ids, [UNK, PAD]);
        let long = encode(&["a", "b", "c", "d", "e", "f"], &v, 4);
        assert_eq!(long.true_length, 4);
        assert_eq!(long.ids, ["a", "b", "c", "d"].map(|t| v.id(t).unwrap()));
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let v = fit_vocab(&docs(&["x y y"]), 10, 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("y"), Some(2));
        assert!(serde_json::from_str::<Vocabulary>(r#"{"tokens":["a"],"max_size":1,"min_freq":1}"#).is_err());
    }
}
