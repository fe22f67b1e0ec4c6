use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use absa_core::corpus::SynthSpec;
use absa_core::model::Task;
use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_compare, cmd_evaluate, cmd_gridsearch, cmd_stats, cmd_synth, cmd_train, cmd_validate};
use crate::config::{ModelKind, Overrides, RunConfig};
use crate::CliError;

// Output goes through these so a closed pipe (`absa ... | head`) is not a panic.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! put {
    ($($t:tt)*) => {{
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "absa", version, about = "Aspect-based sentiment analysis toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Corpus CSV with text, aspect, polarity and language columns
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML manifest declaring the polarity classes
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// dcnn, nb, svm, rf or logreg; a comma-separated list for compare
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub model: Vec<ModelKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML run config; flags take precedence over its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check every row of a corpus file
    Validate(RunArgs),
    /// Write aspect, polarity and language histograms
    Stats(RunArgs),
    /// Split, preprocess, fit one model and score it on the test partition
    Train(RunArgs),
    /// Score a saved checkpoint on a corpus
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train several models on one split and rank them
    Compare(RunArgs),
    /// DCNN grid search over a TOML space file
    Gridsearch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Generate a synthetic corpus
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        n: usize,
        /// Probability that a marker word names the true class
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn resolve(run: RunArgs, space: Option<PathBuf>, checkpoint: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let flags = Overrides {
        data: run.data,
        manifest: run.manifest,
        task: run.task,
        models: (!run.model.is_empty()).then_some(run.model),
        seed: run.seed,
        out: run.out,
        space,
        checkpoint,
    };
    RunConfig::resolve(run.config.as_deref(), flags)
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate(run) => {
            let cfg = resolve(run, None, None)?;
            let report = cmd_validate(&cfg)?;
            for e in &report.errors {
                say!("{e}");
            }
            say!("{} rows, {} errors", report.rows, report.errors.len());
            Ok(if report.is_clean() { 0 } else { 1 })
        }
        Command::Stats(run) => {
            let cfg = resolve(run, None, None)?;
            let out = cmd_stats(&cfg)?;
            for h in &out.histograms {
                let cells: Vec<String> = h.counts.iter().map(|(l, c)| format!("{l}={c}")).collect();
                say!("{}: {}", h.field, cells.join(" "));
            }
            Ok(0)
        }
        Command::Train(run) => {
            let cfg = resolve(run, None, None)?;
            let out = cmd_train(&cfg)?;
            let r = &out.report;
            say!(
                "{} {}: accuracy {:.4}, weighted precision {:.4}, recall {:.4}, f1 {:.4} ({:.1}s)",
                out.task, out.model, r.accuracy, r.weighted_avg.precision, r.weighted_avg.recall, r.weighted_avg.f1, out.seconds
            );
            if let Some(rec) = &out.record {
                say!("best epoch {} of {}", rec.best_epoch, rec.rows.len());
            }
            say!("artifacts in {}", cfg.out.display());
            Ok(0)
        }
        Command::Evaluate { run, checkpoint } => {
            let cfg = resolve(run, None, checkpoint)?;
            let r = cmd_evaluate(&cfg)?;
            say!("accuracy {:.4}, weighted f1 {:.4} on {} records", r.accuracy, r.weighted_avg.f1, r.total);
            Ok(0)
        }
        Command::Compare(run) => {
            let cfg = resolve(run, None, None)?;
            let table = cmd_compare(&cfg)?;
            put!("{}", table.to_csv());
            Ok(0)
        }
        Command::Gridsearch { run, space } => {
            let cfg = resolve(run, space, None)?;
            let out = cmd_gridsearch(&cfg)?;
            put!("{}", out.table.to_csv());
            if out.best_config.is_none() {
                eprintln!("every trial failed");
                return Ok(1);
            }
            Ok(0)
        }
        Command::Synth { out, n, signal, seed } => {
            let written = cmd_synth(&SynthSpec::new(n, seed, signal), &out)?;
            say!("wrote {written} records to {}", out.display());
            Ok(0)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
