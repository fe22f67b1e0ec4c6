//! Data loading and the shared split/preprocess stage.

use std::path::Path;

use absa_core::corpus::{load_dataset, Dataset, Manifest, Partition, SplitSpec};
use absa_core::model::{task_tokens, truncate_keep_last, EncodedSet, Task};
use absa_core::rng::derive_seed;
use absa_core::textprep::{fit_vocab, load_stopwords, Normalizer, Vocabulary};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{stage, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Domain {
        stage: "load",
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the record indices on each side of a split.
pub fn partition_sha256(p: &Partition) -> String {
    sha256_hex(serde_json::to_string(p).expect("partition serialises").as_bytes())
}

pub fn load_manifest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    match &cfg.manifest {
        Some(p) => Manifest::from_path(p).map_err(stage("manifest")),
        None => Ok(Manifest::default()),
    }
}

pub fn normalizer(cfg: &RunConfig) -> Result<Normalizer, CliError> {
    match &cfg.text.stopwords {
        Some(p) => Ok(Normalizer::with_stopwords(load_stopwords(p).map_err(stage("stopwords"))?)),
        None => Ok(Normalizer::default()),
    }
}

/// Model input tokens for each record, untruncated. Polarity inputs end in
/// the record's aspect token.
pub fn documents(ds: &Dataset, nz: &Normalizer, task: Task) -> Vec<Vec<String>> {
    ds.records
        .iter()
        .map(|c| task_tokens(nz.tokens(&c.text), c, task, usize::MAX))
        .collect()
}

/// Cuts documents to the DCNN input length; polarity inputs keep their
/// aspect token.
pub fn fit_length(docs: &[Vec<String>], task: Task, seq_len: usize) -> Vec<Vec<String>> {
    docs.iter()
        .map(|d| match task {
            Task::Polarity => truncate_keep_last(d, seq_len),
            Task::Aspect => d.iter().take(seq_len).cloned().collect(),
        })
        .collect()
}

pub fn encode_set(docs: &[Vec<String>], labels: &[usize], vocab: &Vocabulary, task: Task, seq_len: usize) -> EncodedSet {
    EncodedSet::from_tokens(&fit_length(docs, task, seq_len), labels, vocab, seq_len)
}

pub struct Labeled {
    pub docs: Vec<Vec<String>>,
    pub labels: Vec<usize>,
}

/// One task's data after the train/test split and preprocessing. The
/// vocabulary is fitted on the training partition only.
pub struct Prepared {
    pub task: Task,
    pub manifest: Manifest,
    pub dataset_sha256: String,
    pub split_sha256: String,
    pub class_names: Vec<String>,
    pub normalizer: Normalizer,
    pub vocab: Vocabulary,
    /// Whole training partition (baselines fit on this).
    pub train: Labeled,
    /// Training partition minus the validation carve (DCNN fits on this).
    pub fit: Labeled,
    pub val: Labeled,
    pub test: Labeled,
}

impl Prepared {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Reads the dataset named by `cfg` and the SHA-256 of its bytes.
pub fn load(cfg: &RunConfig) -> Result<(Dataset, String), CliError> {
    load_with(cfg, &load_manifest(cfg)?)
}

pub fn load_with(cfg: &RunConfig, manifest: &Manifest) -> Result<(Dataset, String), CliError> {
    let path = cfg.data_path()?;
    let hash = file_sha256(path)?;
    let ds = load_dataset(path, manifest).map_err(stage("load"))?;
    Ok((ds, hash))
}

fn labeled(ds: &Dataset, nz: &Normalizer, task: Task) -> Labeled {
    Labeled {
        docs: documents(ds, nz, task),
        labels: ds.labels(task.field()),
    }
}

pub fn prepare(cfg: &RunConfig, task: Task) -> Result<Prepared, CliError> {
    let (ds, dataset_sha256) = load(cfg)?;
    prepare_dataset(cfg, task, &ds, dataset_sha256)
}

pub fn prepare_dataset(cfg: &RunConfig, task: Task, ds: &Dataset, dataset_sha256: String) -> Result<Prepared, CliError> {
    let mut spec = SplitSpec::new(cfg.split.train_fraction, cfg.seed);
    if cfg.split.stratify {
        spec = spec.stratified(task.field());
    }
    let partition = Partition::compute(ds, &spec).map_err(stage("split"))?;
    let (train_ds, test_ds) = partition.apply(ds);

    let mut val_spec = SplitSpec::new(1.0 - cfg.split.val_fraction, derive_seed(cfg.seed, 1));
    if cfg.split.stratify {
        val_spec = val_spec.stratified(task.field());
    }
    let (fit_ds, val_ds) = Partition::compute(&train_ds, &val_spec)
        .map_err(stage("validation split"))?
        .apply(&train_ds);

    let nz = normalizer(cfg)?;
    let train = labeled(&train_ds, &nz, task);
    let vocab = fit_vocab(&train.docs, cfg.text.vocab_max_size, cfg.text.vocab_min_freq).map_err(stage("vocabulary"))?;
    Ok(Prepared {
        task,
        manifest: ds.manifest.clone(),
        dataset_sha256,
        split_sha256: partition_sha256(&partition),
        class_names: ds.class_names(task.field()).into_iter().map(String::from).collect(),
        vocab,
        fit: labeled(&fit_ds, &nz, task),
        val: labeled(&val_ds, &nz, task),
        test: labeled(&test_ds, &nz, task),
        train,
        normalizer: nz,
    })
}
