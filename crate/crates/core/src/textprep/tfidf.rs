use serde::{Deserialize, Serialize};

use super::{Result, TextprepError, Vocabulary};
use crate::matrix::Matrix;

pub const VECTORIZER_FORMAT: &str = "absa-tfidf";
const VECTORIZER_VERSION: u32 = 1;

/// Smoothed inverse document frequencies over a fixed vocabulary:
/// `idf_t = ln((1 + N) / (1 + df_t)) + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub df: Vec<usize>,
    pub n_docs: usize,
}

pub fn tfidf_fit<S: AsRef<str>>(corpus: &[Vec<S>], vocab: &Vocabulary) -> Result<TfIdfModel> {
    if corpus.is_empty() {
        return Err(TextprepError::EmptyCorpus);
    }
    let v = vocab.len();
    let mut df = vec![0usize; v];
    let mut seen = vec![usize::MAX; v];
    for (d, doc) in corpus.iter().enumerate() {
        for t in doc {
            if let Some(id) = vocab.id(t.as_ref()) {
                if seen[id] != d {
                    seen[id] = d;
                    df[id] += 1;
                }
            }
        }
    }
    let n = corpus.len();
    let idf = df
        .iter()
        .map(|&k| ((1.0 + n as f64) / (1.0 + k as f64)).ln() + 1.0)
        .collect();
    Ok(TfIdfModel {
        vocabulary: vocab.clone(),
        idf,
        df,
        n_docs: n,
    })
}

/// Raw counts times idf, L2-normalised when nonzero. Tokens outside the
/// vocabulary are ignored.
pub fn tfidf_transform<S: AsRef<str>>(tokens: &[S], model: &TfIdfModel) -> Vec<f64> {
    let mut out = vec![0.0; model.idf.len()];
    for t in tokens {
        if let Some(id) = model.vocabulary.id(t.as_ref()) {
            out[id] += 1.0;
        }
    }
    for (x, idf) in out.iter_mut().zip(&model.idf) {
        *x *= idf;
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct VectorizerDoc {
    format: String,
    version: u32,
    model: TfIdfModel,
    config: serde_json::Value,
}

impl TfIdfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn transform_all<S: AsRef<str>>(&self, docs: &[Vec<S>]) -> Matrix {
        Matrix::from_rows(docs.iter().map(|d| tfidf_transform(d, self)).collect())
    }

    /// Versioned JSON document with the fitted state plus a caller-supplied
    /// echo of the preprocessing configuration.
    pub fn to_json(&self, config: serde_json::Value) -> String {
        serde_json::to_string_pretty(&VectorizerDoc {
            format: VECTORIZER_FORMAT.into(),
            version: VECTORIZER_VERSION,
            model: self.clone(),
            config,
        })
        .expect("vectorizer serialises")
    }

    pub fn from_json(text: &str) -> Result<(TfIdfModel, serde_json::Value)> {
        let doc: VectorizerDoc =
            serde_json::from_str(text).map_err(|e| TextprepError::BadDocument(e.to_string()))?;
        if doc.format != VECTORIZER_FORMAT || doc.version != VECTORIZER_VERSION {
            return Err(TextprepError::BadDocument(format!(
                "unsupported {} v{}",
                doc.format, doc.version
            )));
        }
        let m = doc.model;
        let v = m.vocabulary.len();
        if m.idf.len() != v || m.df.len() != v {
            return Err(TextprepError::BadDocument("idf/df length differs from vocabulary".into()));
        }
        if m.df.iter().any(|&k| k > m.n_docs) || m.idf.iter().any(|&x| !(x > 0.0)) {
            return Err(TextprepError::BadDocument("inconsistent df/idf".into()));
        }
        Ok((m, doc.config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::fit_vocab;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn docs(spec: &[&str]) -> Vec<Vec<String>> {
        spec.iter()
            .map(|d| d.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    /// Independent count → idf → normalise loop working on token strings.
    fn oracle(train: &[Vec<String>], vocab: &Vocabulary, doc: &[String]) -> Vec<f64> {
        let n = train.len() as f64;
        let mut out = vec![0.0; vocab.len()];
        for (id, token) in vocab.tokens().iter().enumerate() {
            let df = train.iter().filter(|d| d.contains(token)).count() as f64;
            let tf = doc.iter().filter(|t| *t == token).count() as f64;
            out[id] = tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0);
        }
        let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm != 0.0 {
            for x in &mut out {
                *x /= norm;
            }
        }
        out
    }

    #[test]
    fn idf_hand_values() {
        let corpus = docs(&["fim kyau", "fim"]);
        let mut vocab_corpus = corpus.clone();
        vocab_corpus.push(vec!["absent".into()]);
        let vocab = fit_vocab(&vocab_corpus, 100, 1).unwrap();
        let m = tfidf_fit(&corpus, &vocab).unwrap();
        let fim = vocab.id("fim").unwrap();
        let absent = vocab.id("absent").unwrap();
        assert_eq!(m.df[fim], 2);
        assert_eq!(m.idf[fim], 1.0);
        assert_eq!(m.df[absent], 0);
        assert!((m.idf[absent] - 2.0986122886681098).abs() < 1e-12);
        assert!(m.df.iter().all(|&k| k <= m.n_docs));
        assert!(m.idf.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empty_and_single_token_documents() {
        let corpus = docs(&["a b", "b c"]);
        let vocab = fit_vocab(&corpus, 100, 1).unwrap();
        let m = tfidf_fit(&corpus, &vocab).unwrap();
        assert!(tfidf_transform::<String>(&[], &m).iter().all(|&x| x == 0.0));
        let v = tfidf_transform(&["c"], &m);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-15);
        assert!(tfidf_transform(&["unseen"], &m).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn three_doc_matrix_matches_oracle() {
        let corpus = docs(&["kyau fim kyau", "fim mummuna", "jarumi kyau kyau kyau"]);
        let vocab = fit_vocab(&corpus, 100, 1).unwrap();
        let m = tfidf_fit(&corpus, &vocab).unwrap();
        for d in &corpus {
            let got = tfidf_transform(d, &m);
            let want = oracle(&corpus, &vocab, d);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_does_not_touch_model() {
        let corpus = docs(&["a b"]);
        let vocab = fit_vocab(&corpus, 100, 1).unwrap();
        let m = tfidf_fit(&corpus, &vocab).unwrap();
        let before = m.clone();
        let _ = tfidf_transform(&["z", "a"], &m);
        assert_eq!(m, before);
    }

    #[test]
    fn json_document_round_trip() {
        let corpus = docs(&["a b", "b c d"]);
        let vocab = fit_vocab(&corpus, 100, 1).unwrap();
        let m = tfidf_fit(&corpus, &vocab).unwrap();
        let json = m.to_json(serde_json::json!({"seq_len": 32}));
        let (back, cfg) = TfIdfModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(cfg["seq_len"], 32);
        let broken = json.replace(VECTORIZER_FORMAT, "other");
        assert!(TfIdfModel::from_json(&broken).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_oracle_on_random_corpora(
            raw in proptest::collection::vec(proptest::collection::vec(0u8..200, 0..12), 1..50),
            probe in proptest::collection::vec(0u8..220, 0..15),
        ) {
            let to_tokens = |d: &Vec<u8>| d.iter().map(|i| format!("w{i}")).collect::<Vec<_>>();
            let corpus: Vec<Vec<String>> = raw.iter().map(to_tokens).collect();
            prop_assume!(corpus.iter().any(|d| !d.is_empty()));
            let vocab = fit_vocab(&corpus, 202, 1).unwrap();
            let m = tfidf_fit(&corpus, &vocab).unwrap();
            let distinct: BTreeSet<&String> = corpus.iter().flatten().collect();
            prop_assert!(vocab.len() <= 202 && vocab.len() == distinct.len() + 2);
            let mut docs_to_check = corpus.clone();
            docs_to_check.push(to_tokens(&probe));
            for d in &docs_to_check {
                let got = tfidf_transform(d, &m);
                let want = oracle(&corpus, &vocab, d);
                for (g, w) in got.iter().zip(&want) {
                    prop_assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }
}
