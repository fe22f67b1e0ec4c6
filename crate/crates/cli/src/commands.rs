use std::path::PathBuf;
use std::time::Instant;

use absa_core::baselines::{self, BaselineModel, FitInfo};
use absa_core::corpus::{
    class_distribution, save_dataset, validate_file, Histogram, LabelField, Manifest, SynthSpec, ValidationReport,
};
use absa_core::metrics::{self, MetricsReport, CSV_HEADER};
use absa_core::model::{grid_search, train, DcnnModel, ModelConfig, SearchData, SearchSpace, Task, TrainRecord, TrialTable};
use absa_core::textprep::{tfidf_fit, Normalizer, TfIdfModel, Vocabulary};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{csv_preamble, document, write, FORMAT_VERSION, RUN_FORMAT};
use crate::config::{ModelKind, RunConfig};
use crate::pipeline::{documents, encode_set, load, load_manifest, load_with, prepare, prepare_dataset, Prepared};
use crate::{stage, CliError};

type Result<T> = std::result::Result<T, CliError>;

pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let manifest = load_manifest(cfg)?;
    validate_file(cfg.data_path()?, &manifest).map_err(stage("validate"))
}

pub struct StatsOutcome {
    pub histograms: Vec<Histogram>,
    pub artifacts: Vec<PathBuf>,
}

/// Aspect, polarity and language histograms, one CSV each.
pub fn cmd_stats(cfg: &RunConfig) -> Result<StatsOutcome> {
    let (ds, hash) = load(cfg)?;
    let mut histograms = Vec::new();
    let mut artifacts = Vec::new();
    for field in [LabelField::Aspect, LabelField::Polarity, LabelField::Language] {
        let h = class_distribution(&ds, field);
        let text = csv_preamble(cfg, &hash, &[]) + &h.to_csv();
        artifacts.push(write(&cfg.out.join(format!("{field}.csv")), &text)?);
        histograms.push(h);
    }
    let body = json!({ "records": ds.len(), "histograms": histograms });
    artifacts.push(write(&cfg.out.join("stats.json"), &document("stats", cfg, &hash, body))?);
    Ok(StatsOutcome { histograms, artifacts })
}

/// Everything needed to apply a trained model to new text.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunBundle {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub model: ModelKind,
    pub manifest: Manifest,
    pub class_names: Vec<String>,
    pub normalizer: Normalizer,
    pub vocabulary: Option<Vocabulary>,
    pub tfidf: Option<TfIdfModel>,
    pub weights: Value,
    pub dataset_sha256: String,
    pub run_config: RunConfig,
}

impl RunBundle {
    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Domain {
            stage: "checkpoint",
            message: format!("{}: {e}", path.display()),
        })?;
        let b: RunBundle = serde_json::from_str(&text).map_err(stage("checkpoint"))?;
        if b.format != RUN_FORMAT || b.version != FORMAT_VERSION {
            return Err(CliError::Domain {
                stage: "checkpoint",
                message: format!("unsupported {} v{}", b.format, b.version),
            });
        }
        Ok(b)
    }

    fn predict(&self, docs: &[Vec<String>]) -> Result<Vec<usize>> {
        let missing = |what: &str| CliError::Domain {
            stage: "checkpoint",
            message: format!("missing {what}"),
        };
        match self.model {
            ModelKind::Dcnn => {
                let m = DcnnModel::from_checkpoint_value(&self.weights).map_err(stage("checkpoint"))?;
                let vocab = self.vocabulary.as_ref().ok_or_else(|| missing("vocabulary"))?;
                let seq_len = m.config().seq_len;
                let set = encode_set(docs, &vec![0; docs.len()], vocab, self.task, seq_len);
                Ok(m.predict(&set.sequences).map_err(stage("prediction"))?.labels)
            }
            ModelKind::Baseline(_) => {
                let m = BaselineModel::from_checkpoint(&self.weights.to_string()).map_err(stage("checkpoint"))?;
                let tfidf = self.tfidf.as_ref().ok_or_else(|| missing("tf-idf model"))?;
                m.predict(&tfidf.transform_all(docs)).map_err(stage("prediction"))
            }
        }
    }
}

/// A model fitted on one prepared task and scored on its test partition.
struct Fitted {
    report: MetricsReport,
    record: Option<TrainRecord>,
    fit_info: Option<FitInfo>,
    model_config: Value,
    bundle: RunBundle,
    seconds: f64,
}

fn fit_and_score(cfg: &RunConfig, p: &Prepared, kind: ModelKind) -> Result<Fitted> {
    let start = Instant::now();
    let names: Vec<&str> = p.class_names.iter().map(String::as_str).collect();
    let mut bundle = RunBundle {
        format: RUN_FORMAT.into(),
        version: FORMAT_VERSION,
        task: p.task,
        model: kind,
        manifest: p.manifest.clone(),
        class_names: p.class_names.clone(),
        normalizer: p.normalizer.clone(),
        vocabulary: None,
        tfidf: None,
        weights: Value::Null,
        dataset_sha256: p.dataset_sha256.clone(),
        run_config: cfg.clone(),
    };
    let (pred, record, fit_info, model_config) = match kind {
        ModelKind::Dcnn => {
            let mc = ModelConfig {
                vocab_size: p.vocab.len(),
                num_classes: p.num_classes(),
                seed: cfg.seed,
                ..cfg.dcnn.clone()
            };
            let enc = |d: &crate::pipeline::Labeled| encode_set(&d.docs, &d.labels, &p.vocab, p.task, mc.seq_len);
            let mut model = DcnnModel::build(mc.clone()).map_err(stage("model"))?;
            let record = train(&mut model, &enc(&p.fit), &enc(&p.val)).map_err(stage("training"))?;
            let pred = model.predict(&enc(&p.test).sequences).map_err(stage("prediction"))?;
            bundle.vocabulary = Some(p.vocab.clone());
            bundle.weights = model.to_checkpoint_value();
            (pred.labels, Some(record), None, serde_json::to_value(&mc).expect("config serialises"))
        }
        ModelKind::Baseline(k) => {
            let tfidf = tfidf_fit(&p.train.docs, &p.vocab).map_err(stage("tf-idf"))?;
            let x = tfidf.transform_all(&p.train.docs);
            let m = baselines::fit(k, &x, &p.train.labels, p.num_classes(), &cfg.baselines, cfg.seed)
                .map_err(stage("training"))?;
            let pred = m.predict(&tfidf.transform_all(&p.test.docs)).map_err(stage("prediction"))?;
            if m.fit_info().is_some_and(|i| !i.converged) {
                eprintln!("warning: {k} did not converge within its iteration limit");
            }
            bundle.weights = serde_json::from_str(&m.to_checkpoint().map_err(stage("checkpoint"))?)
                .expect("checkpoint is JSON");
            bundle.tfidf = Some(tfidf);
            (pred, None, m.fit_info(), serde_json::to_value(&cfg.baselines).expect("config serialises"))
        }
    };
    let report = metrics::evaluate(&p.test.labels, &pred, &names).map_err(stage("metrics"))?;
    Ok(Fitted {
        report,
        record,
        fit_info,
        model_config,
        bundle,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub task: Task,
    pub model: ModelKind,
    pub report: MetricsReport,
    pub record: Option<TrainRecord>,
    pub fit_info: Option<FitInfo>,
    pub split_sha256: String,
    pub artifacts: Vec<PathBuf>,
    pub seconds: f64,
}

fn metrics_body(task: Task, model: ModelKind, split_sha256: &str, f: &Fitted) -> Value {
    json!({
        "task": task,
        "model": model,
        "split_sha256": split_sha256,
        "model_config": f.model_config,
        "averaging": "comparison rows use support-weighted averages",
        "report": f.report,
        "fit_info": f.fit_info,
        "training": f.record.as_ref().map(|r| json!({
            "best_epoch": r.best_epoch,
            "epochs_run": r.rows.len(),
            "stopped_early": r.stopped_early,
        })),
    })
}

/// split → preprocess → fit → score on the test partition. Writes
/// `checkpoint.json`, `metrics.json`, `metrics.csv` and, for the DCNN,
/// `train_record.csv` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let task = cfg.task.unwrap_or(Task::Aspect);
    let p = prepare(cfg, task)?;
    let f = fit_and_score(cfg, &p, cfg.model)?;
    let hash = &p.dataset_sha256;
    let mut artifacts = vec![write(
        &cfg.out.join("checkpoint.json"),
        &serde_json::to_string(&f.bundle).expect("bundle serialises"),
    )?];
    if let Some(r) = &f.record {
        let text = csv_preamble(cfg, hash, &[&format!("best_epoch={}", r.best_epoch)]) + &r.to_csv();
        artifacts.push(write(&cfg.out.join("train_record.csv"), &text)?);
    }
    let body = metrics_body(task, cfg.model, &p.split_sha256, &f);
    artifacts.push(write(&cfg.out.join("metrics.json"), &document("metrics", cfg, hash, body))?);
    let csv = csv_preamble(cfg, hash, &["averages=weighted"])
        + CSV_HEADER
        + "\n"
        + &f.report.csv_row(&cfg.model.to_string())
        + "\n";
    artifacts.push(write(&cfg.out.join("metrics.csv"), &csv)?);
    Ok(TrainOutcome {
        task,
        model: cfg.model,
        report: f.report,
        record: f.record,
        fit_info: f.fit_info,
        split_sha256: p.split_sha256,
        artifacts,
        seconds: f.seconds,
    })
}

/// Applies a saved checkpoint to every record of the dataset.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<MetricsReport> {
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Usage("evaluate needs --checkpoint".into()))?;
    let bundle = RunBundle::read(path)?;
    let (ds, hash) = load_with(cfg, &bundle.manifest)?;
    let docs = documents(&ds, &bundle.normalizer, bundle.task);
    let pred = bundle.predict(&docs)?;
    let names: Vec<&str> = bundle.class_names.iter().map(String::as_str).collect();
    let report = metrics::evaluate(&ds.labels(bundle.task.field()), &pred, &names).map_err(stage("metrics"))?;
    let body = json!({
        "task": bundle.task,
        "model": bundle.model,
        "checkpoint_dataset_sha256": bundle.dataset_sha256,
        "checkpoint_run_config": bundle.run_config,
        "report": report,
    });
    write(&cfg.out.join("metrics.json"), &document("evaluation", cfg, &hash, body))?;
    let csv = csv_preamble(cfg, &hash, &["averages=weighted"]) + CSV_HEADER + "\n" + &report.csv_row(&bundle.model.to_string()) + "\n";
    write(&cfg.out.join("metrics.csv"), &csv)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub task: Task,
    pub rank: usize,
    pub model: ModelKind,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub split_sha256: String,
    /// DCNN epochs actually run.
    pub epochs_run: Option<usize>,
    #[serde(skip)]
    pub fit_seconds: f64,
}

pub const COMPARE_HEADER: &str = "task,rank,model,accuracy,precision,recall,f1,split_sha256";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.task, r.rank, r.model, r.accuracy, r.precision, r.recall, r.f1, r.split_sha256
            ));
        }
        out
    }
}

/// Trains every listed model on the same split of each task and ranks them
/// by test accuracy, then weighted F1, then list order.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareTable> {
    if cfg.models.len() < 2 {
        return Err(CliError::Usage("compare needs at least two models".into()));
    }
    let tasks = cfg.task.map_or(Task::ALL.to_vec(), |t| vec![t]);
    let (ds, hash) = load(cfg)?;
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for task in tasks {
        let p = prepare_dataset(cfg, task, &ds, hash.clone())?;
        let mut scored = Vec::new();
        for (i, &kind) in cfg.models.iter().enumerate() {
            let f = fit_and_score(cfg, &p, kind)?;
            eprintln!("{task} {kind}: accuracy {:.4} ({:.1}s)", f.report.accuracy, f.seconds);
            details.push(metrics_body(task, kind, &p.split_sha256, &f));
            scored.push((i, kind, f.record.as_ref().map(|r| r.rows.len()), f.seconds, f.report));
        }
        scored.sort_by(|a, b| {
            b.4.accuracy
                .total_cmp(&a.4.accuracy)
                .then(b.4.weighted_avg.f1.total_cmp(&a.4.weighted_avg.f1))
                .then(a.0.cmp(&b.0))
        });
        for (rank, (_, kind, epochs_run, fit_seconds, r)) in scored.into_iter().enumerate() {
            rows.push(CompareRow {
                task,
                rank: rank + 1,
                model: kind,
                accuracy: r.accuracy,
                precision: r.weighted_avg.precision,
                recall: r.weighted_avg.recall,
                f1: r.weighted_avg.f1,
                split_sha256: p.split_sha256.clone(),
                epochs_run,
                fit_seconds,
            });
        }
    }
    let table = CompareTable { rows };
    let csv = csv_preamble(cfg, &hash, &["averages=weighted", "ranking=accuracy desc, f1 desc, model list order"]) + &table.to_csv();
    write(&cfg.out.join("compare.csv"), &csv)?;
    let body = json!({ "rows": table.rows, "models": details });
    write(&cfg.out.join("compare.json"), &document("comparison", cfg, &hash, body))?;
    Ok(table)
}

pub struct GridOutcome {
    pub table: TrialTable,
    pub best_config: Option<RunConfig>,
    pub artifacts: Vec<PathBuf>,
}

/// DCNN grid search scored on the validation carve. Writes `trials.csv`,
/// `gridsearch.json` and, when any trial succeeded, `best_config.toml`,
/// a complete run config for `train --config`.
pub fn cmd_gridsearch(cfg: &RunConfig) -> Result<GridOutcome> {
    let path = cfg
        .space
        .as_deref()
        .ok_or_else(|| CliError::Usage("gridsearch needs --space or `space` in the config file".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read space {}: {e}", path.display())))?;
    let space = SearchSpace::from_toml_str(&text).map_err(stage("search space"))?;
    let task = cfg.task.unwrap_or(Task::Aspect);
    let p = prepare(cfg, task)?;
    let base = ModelConfig {
        vocab_size: p.vocab.len(),
        num_classes: p.num_classes(),
        seed: cfg.seed,
        ..cfg.dcnn.clone()
    };
    let data = SearchData {
        vocab: &p.vocab,
        train_docs: &p.fit.docs,
        train_labels: &p.fit.labels,
        val_docs: &p.val.docs,
        val_labels: &p.val.labels,
        pin_last_token: task == Task::Polarity,
    };
    let table = grid_search(&base, &space, &data).map_err(stage("grid search"))?;
    let hash = &p.dataset_sha256;
    let mut artifacts = vec![write(&cfg.out.join("trials.csv"), &(csv_preamble(cfg, hash, &[]) + &table.to_csv()))?];
    artifacts.push(write(
        &cfg.out.join("gridsearch.json"),
        &document("grid search", cfg, hash, json!({ "task": task, "trials": table.trials })),
    )?);
    let best_config = table.best().map(|t| RunConfig {
        task: Some(task),
        model: ModelKind::Dcnn,
        space: None,
        dcnn: t.config.clone(),
        ..cfg.clone()
    });
    if let Some(best) = &best_config {
        let text = format!("# best trial of grid search over {}\n# dataset_sha256={hash}\n{}", path.display(), best.to_toml());
        artifacts.push(write(&cfg.out.join("best_config.toml"), &text)?);
    }
    Ok(GridOutcome {
        table,
        best_config,
        artifacts,
    })
}

/// Writes a synthetic corpus to `path`.
pub fn cmd_synth(spec: &SynthSpec, path: &std::path::Path) -> Result<usize> {
    let ds = absa_core::corpus::synth_generate(spec).map_err(stage("synth"))?;
    save_dataset(&ds, path).map_err(stage("write"))?;
    Ok(ds.len())
}
