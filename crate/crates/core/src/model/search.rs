use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{train, truncate_keep_last, DcnnModel, EncodedSet, ModelConfig, ModelError, Result};
use crate::textprep::Vocabulary;

/// Keys fixed by the data rather than tunable.
const FIXED_KEYS: [&str; 2] = ["vocab_size", "num_classes"];

/// Candidate values per [`ModelConfig`] field. Points are enumerated with
/// the last axis varying fastest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchSpace {
    axes: Vec<(String, Vec<serde_json::Value>)>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn axis<T: Serialize>(mut self, key: &str, values: &[T]) -> Self {
        let values = values
            .iter()
            .map(|v| serde_json::to_value(v).expect("axis value serialises"))
            .collect();
        self.axes.push((key.to_string(), values));
        self
    }

    /// Parses a TOML table of arrays, e.g. `embed_dim = [32, 64]`. Axes are
    /// taken in key order.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: BTreeMap<String, toml::Value> =
            toml::from_str(text).map_err(|e| ModelError::BadSpace(e.to_string()))?;
        let mut space = SearchSpace::new();
        for (key, value) in table {
            let toml::Value::Array(items) = value else {
                return Err(ModelError::BadSpace(format!("{key}: expected an array of candidates")));
            };
            let values = items
                .into_iter()
                .map(|v| serde_json::to_value(v).map_err(|e| ModelError::BadSpace(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            space.axes.push((key, values));
        }
        Ok(space)
    }

    pub fn axes(&self) -> &[(String, Vec<serde_json::Value>)] {
        &self.axes
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Every Cartesian point applied to `base`, with its `key=value` label.
    pub fn points(&self, base: &ModelConfig) -> Result<Vec<(String, ModelConfig)>> {
        if self.axes.is_empty() {
            return Err(ModelError::EmptySpace("no axes".into()));
        }
        if let Some((key, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(ModelError::EmptySpace(format!("axis {key} has no candidates")));
        }
        let base_value = serde_json::to_value(base).expect("config serialises");
        for (key, _) in &self.axes {
            if FIXED_KEYS.contains(&key.as_str()) {
                return Err(ModelError::BadSpace(format!("{key} is determined by the data")));
            }
            if base_value.get(key).is_none() {
                return Err(ModelError::BadSpace(format!("unknown key {key}")));
            }
        }
        let mut out = Vec::with_capacity(self.size());
        let mut digits = vec![0usize; self.axes.len()];
        loop {
            let mut value = base_value.clone();
            let mut label = Vec::with_capacity(self.axes.len());
            for ((key, values), &d) in self.axes.iter().zip(&digits) {
                value[key.as_str()] = values[d].clone();
                label.push(format!("{key}={}", values[d]));
            }
            let config: ModelConfig =
                serde_json::from_value(value).map_err(|e| ModelError::BadSpace(format!("{}: {e}", label.join(";"))))?;
            out.push((label.join(";"), config));

            let mut axis = self.axes.len();
            loop {
                if axis == 0 {
                    return Ok(out);
                }
                axis -= 1;
                digits[axis] += 1;
                if digits[axis] < self.axes[axis].1.len() {
                    break;
                }
                digits[axis] = 0;
            }
        }
    }
}

/// Token-level train and validation data; each trial encodes it at its own
/// sequence length.
#[derive(Clone, Debug)]
pub struct SearchData<'a> {
    pub vocab: &'a Vocabulary,
    pub train_docs: &'a [Vec<String>],
    pub train_labels: &'a [usize],
    pub val_docs: &'a [Vec<String>],
    pub val_labels: &'a [usize],
    /// Keep each document's final token (a polarity input's aspect token)
    /// when truncating to the trial's sequence length.
    pub pin_last_token: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trial {
    /// Position in enumeration order.
    pub index: usize,
    pub label: String,
    pub config: ModelConfig,
    pub val_acc: Option<f64>,
    pub val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub error: Option<String>,
}

impl Trial {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Validation accuracy descending, then validation loss ascending, then
/// label; failed trials sort last in enumeration order.
pub fn rank_order(a: &Trial, b: &Trial) -> Ordering {
    match (a.val_acc.zip(a.val_loss), b.val_acc.zip(b.val_loss)) {
        (Some((acc_a, loss_a)), Some((acc_b, loss_b))) => acc_b
            .total_cmp(&acc_a)
            .then(loss_a.total_cmp(&loss_b))
            .then_with(|| a.label.cmp(&b.label)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    }
}

/// Trials in rank order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialTable {
    pub trials: Vec<Trial>,
}

impl TrialTable {
    pub fn best(&self) -> Option<&Trial> {
        self.trials.first().filter(|t| t.succeeded())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "trial", "config", "val_acc", "val_loss", "best_epoch", "epochs_run", "status"])
            .expect("in-memory write");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for (rank, t) in self.trials.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                t.index.to_string(),
                t.label.clone(),
                opt(t.val_acc.map(|v| v.to_string())),
                opt(t.val_loss.map(|v| v.to_string())),
                opt(t.best_epoch.map(|v| v.to_string())),
                opt(t.epochs_run.map(|v| v.to_string())),
                t.error.clone().unwrap_or_else(|| "ok".into()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn run_trial(index: usize, label: String, config: ModelConfig, data: &SearchData<'_>) -> Trial {
    let mut trial = Trial {
        index,
        label,
        config: config.clone(),
        val_acc: None,
        val_loss: None,
        best_epoch: None,
        epochs_run: None,
        error: None,
    };
    let outcome = (|| {
        let fit = |docs: &[Vec<String>]| -> Vec<Vec<String>> {
            if data.pin_last_token {
                docs.iter().map(|d| truncate_keep_last(d, config.seq_len)).collect()
            } else {
                docs.to_vec()
            }
        };
        let train_set = EncodedSet::from_tokens(&fit(data.train_docs), data.train_labels, data.vocab, config.seq_len);
        let val_set = EncodedSet::from_tokens(&fit(data.val_docs), data.val_labels, data.vocab, config.seq_len);
        let mut model = DcnnModel::build(config)?;
        train(&mut model, &train_set, &val_set)
    })();
    match outcome {
        Ok(record) => {
            let best = record.best();
            trial.val_acc = Some(best.val_acc);
            trial.val_loss = Some(best.val_loss);
            trial.best_epoch = Some(record.best_epoch);
            trial.epochs_run = Some(record.rows.len());
        }
        Err(e) => trial.error = Some(e.to_string()),
    }
    trial
}

/// Trains one model per point of `space` (trials run in parallel, each
/// with its own config seed) and ranks them with [`rank_order`]. A failing
/// trial is recorded with its error and does not stop the search.
pub fn grid_search(base: &ModelConfig, space: &SearchSpace, data: &SearchData<'_>) -> Result<TrialTable> {
    let points = space.points(base)?;
    let mut trials: Vec<Trial> = points
        .into_par_iter()
        .enumerate()
        .map(|(i, (label, config))| run_trial(i, label, config, data))
        .collect();
    trials.sort_by(rank_order);
    Ok(TrialTable { trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_enumeration() {
        let space = SearchSpace::new().axis("embed_dim", &[4, 8]).axis("dropout_rate", &[0.0, 0.25, 0.5]);
        let pts = space.points(&ModelConfig::new(10, 3)).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].0, "embed_dim=4;dropout_rate=0.0");
        assert_eq!(pts[1].0, "embed_dim=4;dropout_rate=0.25");
        assert_eq!(pts[5].1.embed_dim, 8);
        assert_eq!(pts[5].1.dropout_rate, 0.5);
        assert_eq!(pts[5].1.vocab_size, 10);
    }

    #[test]
    fn bad_spaces() {
        let base = ModelConfig::new(10, 3);
        assert!(matches!(SearchSpace::new().points(&base), Err(ModelError::EmptySpace(_))));
        let empty: &[usize] = &[];
        assert!(matches!(
            SearchSpace::new().axis("embed_dim", empty).points(&base),
            Err(ModelError::EmptySpace(_))
        ));
        assert!(matches!(
            SearchSpace::new().axis("depth", &[1]).points(&base),
            Err(ModelError::BadSpace(_))
        ));
        assert!(matches!(
            SearchSpace::new().axis("num_classes", &[2]).points(&base),
            Err(ModelError::BadSpace(_))
        ));
        assert!(matches!(
            SearchSpace::new().axis("embed_dim", &["wide"]).points(&base),
            Err(ModelError::BadSpace(_))
        ));
    }

    #[test]
    fn toml_space() {
        let space = SearchSpace::from_toml_str("lstm_hidden = [4, 8]\nlearning_rate = [0.01]\n").unwrap();
        assert_eq!(space.size(), 2);
        assert_eq!(space.axes()[0].0, "learning_rate");
        assert!(SearchSpace::from_toml_str("lstm_hidden = 4").is_err());
    }
}
