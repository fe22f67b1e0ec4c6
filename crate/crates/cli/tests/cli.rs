use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use absa_cli::artifacts::strip_preamble;
use absa_cli::pipeline::file_sha256;
use absa_cli::{cmd_compare, cmd_gridsearch, cmd_train, ModelKind, RunConfig};
use absa_core::baselines::BaselineKind;
use absa_core::model::Task;

const SMALL_DCNN: &str = "[dcnn]\nseq_len = 16\nembed_dim = 8\nconv1_filters = 4\nconv2_filters = 8\nlstm_hidden = 8\ndense_units = 16\nepochs = 4\n";

fn absa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_csv(dir: &Path, name: &str, rows: &[(&str, &str, &str, &str)]) -> PathBuf {
    let mut text = String::from("text,aspect,polarity,language\n");
    for (t, a, p, l) in rows {
        text.push_str(&format!("{t},{a},{p},{l}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn synth(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("synth{n}_{seed}.csv"));
    let o = absa(&["synth", "--out", path.to_str().unwrap(), "--n", &n.to_string(), "--seed", &seed.to_string()], dir);
    assert!(o.status.success());
    path
}

fn small_config(dir: &Path, data: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str(SMALL_DCNN).unwrap();
    cfg.data = Some(data.to_path_buf());
    cfg.out = dir.join("out");
    cfg
}

#[test]
fn validate_reports_and_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write_csv(dir.path(), "clean.csv", &[("Fim mai kyau", "movie", "positive", "hausa")]);
    let o = absa(&["validate", "--data", clean.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 errors"));

    let bad = write_csv(
        dir.path(),
        "bad.csv",
        &[("Fim mai kyau", "movie", "positive", "hausa"), ("Jarumi", "actor", "positive", "hausa")],
    );
    let o = absa(&["validate", "--data", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("row 2") && out.contains("aspect") && out.contains("actor"), "{out}");
    assert!(out.contains("1 errors"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = absa(&["validate", "--data", empty.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_csv(dir.path(), "d.csv", &[("Fim", "movie", "positive", "hausa")]);
    let d = data.to_str().unwrap();
    assert_eq!(absa(&["train", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(absa(&["train"], dir.path()).status.code(), Some(2));
    assert_eq!(absa(&["train", "--data", d, "--task", "topic"], dir.path()).status.code(), Some(2));
    assert_eq!(absa(&["compare", "--data", d, "--model", "nb"], dir.path()).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seeds = 3\n").unwrap();
    assert_eq!(absa(&["train", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(absa(&["gridsearch", "--data", d], dir.path()).status.code(), Some(2));
}

#[test]
fn stats_counts_match_composition() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for (aspect, k) in [("person", 5), ("episode", 3), ("movie", 2)] {
        for i in 0..k {
            rows.push(("wannan yayi kyau", aspect, if i % 2 == 0 { "neutral" } else { "positive" }, "hausa"));
        }
    }
    let data = write_csv(dir.path(), "d.csv", &rows);
    let out = dir.path().join("stats");
    let o = absa(&["stats", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let aspect = strip_preamble(&std::fs::read_to_string(out.join("aspect.csv")).unwrap());
    assert_eq!(aspect, "label,count\nperson,5\nepisode,3\nmovie,2\ngeneral,0\n");
    for field in ["aspect", "polarity", "language"] {
        let text = strip_preamble(&std::fs::read_to_string(out.join(format!("{field}.csv"))).unwrap());
        let total: usize = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 10, "{field}");
    }
    let all_person: Vec<_> = (0..4).map(|_| ("jarumi", "person", "negative", "engausa")).collect();
    let data = write_csv(dir.path(), "p.csv", &all_person);
    absa(&["stats", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    let aspect = strip_preamble(&std::fs::read_to_string(out.join("aspect.csv")).unwrap());
    assert_eq!(aspect.lines().skip(1).filter(|l| !l.ends_with(",0")).count(), 1);
}

#[test]
fn baseline_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 120, 3);
    let before = file_sha256(&data).unwrap();
    let out = dir.path().join("lr");
    let d = data.to_str().unwrap();
    let o = absa(&["train", "--data", d, "--task", "polarity", "--model", "logreg", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.json", "metrics.json", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("train_record.csv").exists());
    let row = strip_preamble(&std::fs::read_to_string(out.join("metrics.csv")).unwrap());
    let mut lines = row.lines();
    assert_eq!(lines.next(), Some("model,accuracy,precision,recall,f1"));
    assert!(lines.next().unwrap().starts_with("logreg,"));

    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["dataset_sha256"], before.as_str());
    assert_eq!(metrics["run_config"]["model"], "logreg");
    assert_eq!(metrics["run_config"]["task"], "polarity");

    let ev = dir.path().join("ev");
    let ck = out.join("checkpoint.json");
    let o = absa(&["evaluate", "--data", d, "--checkpoint", ck.to_str().unwrap(), "--out", ev.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(eval["report"]["total"], 120);
    assert_eq!(file_sha256(&data).unwrap(), before);
}

#[test]
fn dcnn_evaluate_reproduces_test_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 80, 5);
    let cfg = small_config(dir.path(), &data);
    let trained = cmd_train(&cfg).unwrap();
    let eval_cfg = RunConfig {
        checkpoint: Some(cfg.out.join("checkpoint.json")),
        out: dir.path().join("eval"),
        ..cfg.clone()
    };
    let whole = absa_cli::cmd_evaluate(&eval_cfg).unwrap();
    assert_eq!(whole.total, 80);
    assert_eq!(trained.report.total, 24);
}

#[test]
fn train_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 80, 2);
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, SMALL_DCNN).unwrap();
    let args = ["train", "--data", data.to_str().unwrap(), "--config", cfg_path.to_str().unwrap(), "--out", "o", "--seed", "9"];
    let read = |f: &str| std::fs::read(dir.path().join("o").join(f)).unwrap();
    assert!(absa(&args, dir.path()).status.success());
    let first = (read("metrics.json"), read("train_record.csv"), read("checkpoint.json"));
    assert!(absa(&args, dir.path()).status.success());
    assert_eq!(first, (read("metrics.json"), read("train_record.csv"), read("checkpoint.json")));
}

#[test]
fn compare_shares_one_split_and_ranks_by_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 160, 4);
    let mut cfg = small_config(dir.path(), &data);
    cfg.models = BaselineKind::ALL.iter().map(|&k| ModelKind::Baseline(k)).collect();
    cfg.baselines.rf_trees = 10;
    let table = cmd_compare(&cfg).unwrap();
    assert_eq!(table.rows.len(), 8);
    let hash = &table.rows[0].split_sha256;
    assert!(table.rows.iter().all(|r| &r.split_sha256 == hash));
    for task in Task::ALL {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.task == task).collect();
        let mut resorted = rows.clone();
        resorted.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(b.f1.total_cmp(&a.f1)));
        assert_eq!(rows.iter().map(|r| r.accuracy).collect::<Vec<_>>(), resorted.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }
    let csv = std::fs::read_to_string(cfg.out.join("compare.csv")).unwrap();
    assert!(csv.starts_with("# dataset_sha256="));
    assert!(csv.contains("# averages=weighted"));
}

#[test]
fn gridsearch_tables_and_best_config_refit() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 100, 6);
    let space = dir.path().join("space.toml");
    std::fs::write(&space, "learning_rate = [0.001, 0.01]\nlstm_hidden = [4, 8]\n").unwrap();
    let mut cfg = small_config(dir.path(), &data);
    cfg.task = Some(Task::Polarity);
    cfg.space = Some(space.clone());
    let grid = cmd_gridsearch(&cfg).unwrap();
    assert_eq!(grid.table.trials.len(), 4);
    let trials = strip_preamble(&std::fs::read_to_string(cfg.out.join("trials.csv")).unwrap());
    assert_eq!(trials.lines().count(), 5);

    let best = grid.table.best().unwrap();
    let refit_cfg = RunConfig {
        out: dir.path().join("refit"),
        ..RunConfig::from_path(&cfg.out.join("best_config.toml")).unwrap()
    };
    let refit = cmd_train(&refit_cfg).unwrap();
    let rec = refit.record.unwrap();
    assert!((rec.best().val_acc - best.val_acc.unwrap()).abs() < 1e-9);
    assert_eq!(rec.best_epoch, best.best_epoch.unwrap());

    std::fs::write(&space, "learning_rate = [0.01]\n").unwrap();
    let one = cmd_gridsearch(&cfg).unwrap();
    let direct = cmd_train(&RunConfig { out: dir.path().join("direct"), ..cfg.clone() }).unwrap();
    let rec = direct.record.unwrap();
    assert_eq!(one.table.trials[0].val_loss, Some(rec.best().val_loss));

    std::fs::write(&space, "learning_rate = []\n").unwrap();
    let o = absa(
        &["gridsearch", "--data", data.to_str().unwrap(), "--space", space.to_str().unwrap(), "--out", "g"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}
