use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{stage, CliError};

pub const RUN_FORMAT: &str = "absa-run";
pub const FORMAT_VERSION: u32 = 1;

pub fn write(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(stage("write"))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Domain {
        stage: "write",
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(path.to_path_buf())
}

/// `#` lines placed above a CSV header.
pub fn csv_preamble(run: &RunConfig, dataset_sha256: &str, notes: &[&str]) -> String {
    let mut out = format!("# dataset_sha256={dataset_sha256}\n# run_config={}\n", run.to_json());
    for n in notes {
        out.push_str("# ");
        out.push_str(n);
        out.push('\n');
    }
    out
}

/// JSON document with the standard header fields merged into `body`.
pub fn document(kind: &str, run: &RunConfig, dataset_sha256: &str, body: Value) -> String {
    let mut doc = json!({
        "format": RUN_FORMAT,
        "version": FORMAT_VERSION,
        "artifact": kind,
        "dataset_sha256": dataset_sha256,
        "run_config": run.to_json(),
    });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("artifact serialises");
    text.push('\n');
    text
}

/// Parses a CSV artifact, skipping its `#` preamble.
pub fn strip_preamble(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
