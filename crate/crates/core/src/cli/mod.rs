//! Command-line front end: one subcommand per pipeline stage, each driven
//! by a JSON config with dotted `--set key=value` overrides.

mod commands;
mod schema;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub use commands::*;
pub use schema::{describe, doc_drift, find_command, flatten_defaults, CommandInfo, COMMANDS};

use crate::error::{read_to_string, Error, Result};
use crate::harness::config::from_value_with_overrides;
use crate::harness::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Parser)]
#[command(name = "mednli", version, about = "Clinical natural language inference workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config file; keys missing from it take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted override such as `model.hidden=128`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Directory receiving every artifact of the run.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split clinical notes into canonical sections.
    DataSegment(RunArgs),
    /// Sentence candidates from selected sections.
    DataSplitSentences(RunArgs),
    /// Sample premises into an annotation prompt file.
    DataSamplePrompts(RunArgs),
    /// Turn returned annotations into pairs and a discard log.
    DataIngest(RunArgs),
    /// Pair counts and sentence-length statistics of a dataset.
    DataStats(RunArgs),
    /// Generate a synthetic train/dev/test dataset.
    DataSynth(RunArgs),
    /// Premise-disjoint train/dev/test split of a pairs file.
    DataSplit(RunArgs),
    /// Train subword skip-gram vectors.
    EmbedTrain(RunArgs),
    /// Continue training vectors on corpora in order.
    EmbedFinetune(RunArgs),
    /// Retrofit vectors to a token graph or ontology.
    EmbedRetrofit(RunArgs),
    /// Tag ontology concepts in every pair.
    KbMatch(RunArgs),
    /// Shortest path lengths between concept ids.
    KbPaths(RunArgs),
    /// Histogram of premise-hypothesis concept distances.
    KbHistogram(RunArgs),
    /// In-domain multi-seed training and evaluation.
    Train(RunArgs),
    /// Direct, sequential or multi-target domain transfer.
    Transfer(RunArgs),
    /// Score a saved run on a split.
    Eval(RunArgs),
    /// Sum the predictions of several runs.
    Ensemble(RunArgs),
    /// Train and score without premises.
    ProbeHypothesisOnly(RunArgs),
    /// Accuracy gains of reports against a baseline.
    ReportGains(RunArgs),
    /// Finite-difference gradient checks.
    GradCheck(RunArgs),
    /// Flags, config keys and defaults of a subcommand.
    Describe { subcommand: String },
}

/// Overlays `over` on `base`. Objects merge key by key, except that a
/// single-key object replacing a different single-key object (an enum
/// variant switch) replaces it whole.
pub fn merge_json(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let variant_switch = b.len() == 1 && o.len() == 1 && !o.keys().all(|k| b.contains_key(k));
            if variant_switch {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Defaults, then the config file, then the overrides.
pub fn resolve_config<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut value = serde_json::to_value(defaults)?;
    if let Some(p) = path {
        let file: Value = serde_json::from_str(&read_to_string(p)?).map_err(|e| Error::Config {
            key: "config".into(),
            message: format!("{}: {e}", p.display()),
        })?;
        if !file.is_object() {
            return Err(Error::Config {
                key: "config".into(),
                message: format!("{}: top level must be an object", p.display()),
            });
        }
        merge_json(&mut value, file);
    }
    from_value_with_overrides(value, overrides)
}

fn execute<T, F>(args: &RunArgs, defaults: T, validate: impl Fn(&T) -> Result<()>, run: F) -> Result<()>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce(&T, &Path) -> Result<()>,
{
    let cfg = resolve_config(&defaults, args.config.as_deref(), &args.set)?;
    validate(&cfg)?;
    commands::write_json(&args.out.join(RESOLVED_CONFIG_FILE), &cfg)?;
    run(&cfg, &args.out)
}

fn none<T>(_: &T) -> Result<()> {
    Ok(())
}

fn experiment(args: &RunArgs, defaults: ExperimentConfig, run: fn(&ExperimentConfig, &Path) -> Result<()>) -> Result<()> {
    execute(args, defaults, ExperimentConfig::validate, |cfg, out| {
        commands::write_json(&out.join(&cfg.name).join(RESOLVED_CONFIG_FILE), cfg)?;
        run(cfg, out)
    })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::DataSegment(a) => execute(&a, DataSegmentConfig::default(), none, data_segment),
        Command::DataSplitSentences(a) => execute(&a, DataSplitSentencesConfig::default(), none, data_split_sentences),
        Command::DataSamplePrompts(a) => execute(&a, DataSamplePromptsConfig::default(), none, data_sample_prompts),
        Command::DataIngest(a) => execute(&a, DataIngestConfig::default(), none, data_ingest),
        Command::DataStats(a) => execute(&a, DataStatsConfig::default(), none, data_stats),
        Command::DataSynth(a) => execute(&a, DataSynthConfig::default(), none, data_synth),
        Command::DataSplit(a) => execute(&a, DataSplitConfig::default(), none, data_split),
        Command::EmbedTrain(a) => execute(&a, EmbedTrainConfig::default(), none, embed_train),
        Command::EmbedFinetune(a) => execute(&a, EmbedFinetuneConfig::default(), none, embed_finetune),
        Command::EmbedRetrofit(a) => execute(&a, EmbedRetrofitConfig::default(), none, embed_retrofit),
        Command::KbMatch(a) => execute(&a, KbMatchConfig::default(), none, kb_match),
        Command::KbPaths(a) => execute(&a, KbPathsConfig::default(), none, kb_paths),
        Command::KbHistogram(a) => execute(&a, KbHistogramConfig::default(), none, kb_histogram),
        Command::Train(a) => experiment(&a, ExperimentConfig::default(), train),
        Command::Transfer(a) => experiment(&a, transfer_defaults(), transfer),
        Command::Eval(a) => execute(&a, EvalConfig::default(), none, eval),
        Command::Ensemble(a) => execute(&a, EnsembleConfig::default(), none, ensemble),
        Command::ProbeHypothesisOnly(a) => experiment(&a, probe_defaults(), probe_hypothesis_only),
        Command::ReportGains(a) => execute(&a, ReportGainsConfig::default(), none, report_gains),
        Command::GradCheck(a) => execute(&a, GradCheckConfig::default(), none, grad_check),
        Command::Describe { subcommand } => {
            print!("{}", describe(&subcommand)?);
            Ok(())
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests;
