//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.
//!
//! | key | flag | default |
//! |---|---|---|
//! | `data` | `--data` | none (required by every command except `synth`) |
//! | `manifest` | `--manifest` | three polarity classes |
//! | `task` | `--task` | `aspect` for train; both tasks for compare |
//! | `model` | `--model` | `dcnn` |
//! | `models` | `--model a,b,...` (compare) | all five |
//! | `seed` | `--seed` | 42 |
//! | `out` | `--out` | `runs` |
//! | `space` | `--space` | none |
//! | `checkpoint` | `--checkpoint` | none |
//! | `[split]`, `[text]`, `[dcnn]`, `[baselines]` | file only | see the structs |
//!
//! `dcnn.vocab_size` and `dcnn.num_classes` are set from the data, and
//! `dcnn.seed` is always the run seed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use absa_core::baselines::{BaselineConfig, BaselineKind};
use absa_core::model::{ModelConfig, Task};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The DCNN or one of the classical baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Dcnn,
    Baseline(BaselineKind),
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Dcnn,
        ModelKind::Baseline(BaselineKind::NaiveBayes),
        ModelKind::Baseline(BaselineKind::LinearSvm),
        ModelKind::Baseline(BaselineKind::RandomForest),
        ModelKind::Baseline(BaselineKind::LogisticRegression),
    ];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Dcnn => f.write_str("dcnn"),
            ModelKind::Baseline(k) => k.fmt(f),
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().eq_ignore_ascii_case("dcnn") {
            return Ok(ModelKind::Dcnn);
        }
        s.trim()
            .parse()
            .map(ModelKind::Baseline)
            .map_err(|_| format!("unknown model '{s}' (expected dcnn, nb, svm, rf or logreg)"))
    }
}

impl TryFrom<String> for ModelKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(m: ModelKind) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
    /// Share of the training partition held out for early stopping and
    /// grid-search scoring.
    pub val_fraction: f64,
    pub stratify: bool,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            train_fraction: 0.7,
            val_fraction: 0.15,
            stratify: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextSettings {
    /// One stopword per line; the built-in list when absent.
    pub stopwords: Option<PathBuf>,
    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
}

impl Default for TextSettings {
    fn default() -> Self {
        TextSettings {
            stopwords: None,
            vocab_max_size: 10_000,
            vocab_min_freq: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub task: Option<Task>,
    pub model: ModelKind,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub out: PathBuf,
    pub space: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: SplitSettings,
    pub text: TextSettings,
    pub dcnn: ModelConfig,
    pub baselines: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            manifest: None,
            task: None,
            model: ModelKind::Dcnn,
            models: ModelKind::ALL.to_vec(),
            seed: 42,
            out: PathBuf::from("runs"),
            space: None,
            checkpoint: None,
            split: SplitSettings::default(),
            text: TextSettings::default(),
            dcnn: ModelConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub task: Option<Task>,
    pub models: Option<Vec<ModelKind>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub space: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Defaults, then `file`, then `flags`. A single `--model` sets both
    /// `model` and `models`.
    pub fn resolve(file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::from_path(p)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = flags.$field {
                    cfg.$field = v.into();
                }
            )*};
        }
        take!(data, manifest, space, checkpoint);
        if let Some(t) = flags.task {
            cfg.task = Some(t);
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(o) = flags.out {
            cfg.out = o;
        }
        if let Some(models) = flags.models {
            if let [one] = models[..] {
                cfg.model = one;
            }
            cfg.models = models;
        }
        Ok(cfg)
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset given (use --data or `data` in the config file)".into()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\nout = \"from-file\"\n[dcnn]\nepochs = 3\n").unwrap();
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(Some(&path), flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("from-file"));
        assert_eq!(cfg.dcnn.epochs, 3);
        assert_eq!(cfg.dcnn.embed_dim, 64);
        assert_eq!(cfg.split.train_fraction, 0.7);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            task: Some(Task::Polarity),
            data: Some("d.csv".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(RunConfig::from_toml_str("sed = 1"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_toml_str("model = \"cnn\""), Err(CliError::Usage(_))));
    }

    #[test]
    fn model_names() {
        for m in ModelKind::ALL {
            assert_eq!(m.to_string().parse::<ModelKind>().unwrap(), m);
        }
        assert!("svm2".parse::<ModelKind>().is_err());
    }
}
