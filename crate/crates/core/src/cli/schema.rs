use std::collections::BTreeSet;
use std::fmt::Write;

use serde_json::Value;

use super::commands::*;
use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

type Docs = Vec<(String, &'static str)>;

pub struct CommandInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// The published result or procedure the command regenerates.
    pub reproduces: &'static str,
    pub defaults: fn() -> Value,
    docs: fn() -> Docs,
}

impl CommandInfo {
    pub fn docs(&self) -> Docs {
        (self.docs)()
    }
}

fn value_of<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("config defaults serialize")
}

fn fields(prefix: &str, table: &[(&str, &'static str)]) -> Docs {
    table.iter().map(|(k, d)| (format!("{prefix}{k}"), *d)).collect()
}

fn plain(table: &[(&'static str, &'static str)]) -> Docs {
    fields("", table)
}

const SYNTH: &[(&str, &str)] = &[
    ("train", "pairs in the train split; three per premise"),
    ("dev", "pairs in the dev split"),
    ("test", "pairs in the test split"),
    ("domain", "template family: clinical or general"),
    ("planted_artifact", "plant a hypothesis-only cue (negation for contradiction, hedge for neutral)"),
    ("concepts", "number of condition names drawn from the built-in list"),
];

const SKIPGRAM: &[(&str, &str)] = &[
    ("dim", "vector dimension"),
    ("window", "maximum context distance"),
    ("negatives", "negative samples per positive pair"),
    ("epochs", "passes over each corpus"),
    ("lr", "initial learning rate, decayed linearly"),
    ("min_count", "minimum token frequency kept in the vocabulary"),
    ("ngram_min", "shortest character n-gram"),
    ("ngram_max", "longest character n-gram"),
    ("buckets", "hash buckets for n-gram vectors"),
    ("seed", "initialization and sampling seed"),
];

const RETROFIT: &[(&str, &str)] = &[
    ("alpha", "weight anchoring each vector to its original"),
    ("beta", "edge weight: \"inverse_degree\" or {\"uniform\": w}"),
    ("iterations", "in-place sweeps over the graph tokens"),
];

const MODEL: &[(&str, &str)] = &[
    ("architecture", "bow, infersent or esim"),
    ("kb_attention", "add knowledge-directed attention (infersent and esim only)"),
    ("kb_lambda", "decay of attention weights with graph distance"),
    ("embedding_dim", "word vector size; must match pretrained vectors"),
    ("hidden", "LSTM hidden size per direction"),
    ("mlp", "classifier hidden layer widths"),
    ("trainable_embeddings", "update word vectors during training"),
    ("dropout", "dropout on classifier hidden layers"),
    ("seed", "initialization seed; replaced by each entry of seeds during runs"),
];

const GBM: &[(&str, &str)] = &[
    ("max_depth", "depth of each regression tree"),
    ("rounds", "boosting rounds"),
    ("learning_rate", "shrinkage per round"),
    ("min_samples_leaf", "minimum rows per leaf"),
];

const ADAM: &[(&str, &str)] = &[
    ("lr", "Adam learning rate"),
    ("beta1", "first-moment decay"),
    ("beta2", "second-moment decay"),
    ("eps", "denominator stabilizer"),
];

const EXPERIMENT: &[(&str, &str)] = &[
    ("name", "experiment directory under --out"),
    ("learner", "neural or gbm (feature-based boosting)"),
    ("embeddings", "pretrained vectors in text format; hashed random vectors when null"),
    ("ontology", "concept graph JSONL; the bundled demo graph when null"),
    ("transfer", "none, direct, sequential or multi-target"),
    ("carry_optimizer", "keep Adam state across the sequential fine-tuning boundary"),
    ("seeds", "one run per seed; reports give mean and sample std"),
    ("data_seed", "synthetic data seed; the target domain uses data_seed + 1"),
    ("patience", "epochs without validation-loss improvement before stopping"),
    ("max_epochs", "epoch limit per training phase"),
    ("batch_size", "pairs per minibatch"),
    ("min_count", "vocabulary frequency cutoff over the training splits"),
    ("negations", "negation cues counted by the feature extractor"),
    ("workers", "seeds trained concurrently"),
];

fn experiment_docs(cfg: &ExperimentConfig) -> Docs {
    let mut d = plain(EXPERIMENT);
    d.extend(fields("model.", MODEL));
    d.extend(fields("gbm.", GBM));
    d.extend(fields("optimizer.", ADAM));
    d.extend(source_docs("source", &value_of(&cfg.source)));
    match &cfg.target {
        None => d.push(("target".into(), "target domain for transfer; same forms as source")),
        Some(t) => d.extend(source_docs("target", &value_of(t))),
    }
    d
}

fn source_docs(key: &str, value: &Value) -> Docs {
    match value {
        Value::Object(m) if m.contains_key("synthetic") => fields(&format!("{key}.synthetic."), SYNTH),
        _ => vec![(
            format!("{key}.dir"),
            "directory with train/dev/test.jsonl; or {\"synthetic\": {...}} for generated data",
        )],
    }
}

const SCORING: &[(&str, &str)] = &[
    ("dataset", "labeled split file (JSONL) to score"),
    ("ontology", "concept graph for knowledge attention and features; demo graph when null"),
    ("embeddings", "vectors for feature-based runs; the path saved with the run when null"),
    ("head", "classifier head; target for two-head models, main otherwise, when null"),
    ("batch_size", "pairs per forward pass"),
];

pub const COMMANDS: &[CommandInfo] = &[
    CommandInfo {
        name: "data-segment",
        summary: "split clinical notes into canonical sections",
        reproduces: "premise extraction from note sections during dataset construction",
        defaults: || value_of(DataSegmentConfig::default()),
        docs: || {
            plain(&[
                ("input", "a note file or a directory of .txt notes (note id = file stem)"),
                ("aliases", "JSON map from header text to canonical section name; bundled table when null"),
            ])
        },
    },
    CommandInfo {
        name: "data-split-sentences",
        summary: "sentence candidates from selected sections",
        reproduces: "premise sentences drawn from the past medical history section",
        defaults: || value_of(DataSplitSentencesConfig::default()),
        docs: || {
            plain(&[
                ("input", "sections.jsonl written by data-segment"),
                ("sections", "canonical section names to keep; all sections when empty"),
                ("abbreviations", "tokens whose trailing period never ends a sentence"),
            ])
        },
    },
    CommandInfo {
        name: "data-sample-prompts",
        summary: "sample premises into an annotation prompt file",
        reproduces: "prompts asking annotators for one hypothesis per label",
        defaults: || value_of(DataSamplePromptsConfig::default()),
        docs: || {
            plain(&[
                ("input", "candidates.jsonl written by data-split-sentences"),
                ("n", "premises sampled without replacement"),
                ("seed", "sampling seed"),
            ])
        },
    },
    CommandInfo {
        name: "data-ingest",
        summary: "turn returned annotations into pairs and a discard log",
        reproduces: "pair assembly and agreement of a second annotator on sampled hypotheses",
        defaults: || value_of(DataIngestConfig::default()),
        docs: || {
            plain(&[
                ("prompts", "the prompt file the annotations answer"),
                ("annotations", "returned JSONL records, one per premise and annotator"),
            ])
        },
    },
    CommandInfo {
        name: "data-stats",
        summary: "pair counts and sentence-length statistics",
        reproduces: "dataset size and length statistics with length histograms",
        defaults: || value_of(DataStatsConfig::default()),
        docs: || {
            plain(&[
                ("dataset", "directory with train.jsonl, dev.jsonl and test.jsonl"),
                ("histogram_edges", "increasing bucket lower bounds; the last bucket is open"),
            ])
        },
    },
    CommandInfo {
        name: "data-synth",
        summary: "generate a synthetic three-split dataset",
        reproduces: "desk-scale stand-in domains for the restricted clinical corpus",
        defaults: || value_of(DataSynthConfig::default()),
        docs: || {
            let mut d = fields("synth.", SYNTH);
            d.push(("seed".into(), "generation seed"));
            d
        },
    },
    CommandInfo {
        name: "data-split",
        summary: "premise-disjoint train/dev/test split",
        reproduces: "the dataset partition with no premise shared across splits",
        defaults: || value_of(DataSplitConfig::default()),
        docs: || {
            plain(&[
                ("input", "pairs JSONL to split"),
                ("ratios", "train, dev and test shares of premises; sum to 1"),
                ("seed", "shuffle seed"),
            ])
        },
    },
    CommandInfo {
        name: "embed-train",
        summary: "train subword skip-gram vectors on a corpus",
        reproduces: "domain word embeddings trained on clinical notes or literature",
        defaults: || value_of(EmbedTrainConfig::default()),
        docs: || {
            let mut d = plain(&[("corpus", "text file, one sentence per line")]);
            d.extend(fields("skipgram.", SKIPGRAM));
            d
        },
    },
    CommandInfo {
        name: "embed-finetune",
        summary: "continue training vectors on corpora in order",
        reproduces: "embedding chains initialized from general vectors and tuned on domain text",
        defaults: || value_of(EmbedFinetuneConfig::default()),
        docs: || {
            let mut d = plain(&[
                ("init", "starting vectors in text format"),
                ("corpora", "text corpora trained on in order"),
            ]);
            d.extend(fields("skipgram.", SKIPGRAM));
            d
        },
    },
    CommandInfo {
        name: "embed-retrofit",
        summary: "pull graph-connected vectors together",
        reproduces: "embeddings retrofitted to the ontology",
        defaults: || value_of(EmbedRetrofitConfig::default()),
        docs: || {
            let mut d = plain(&[
                ("vectors", "vectors in text format"),
                ("adjacency", "token graph JSONL {token, neighbors}; exclusive with ontology"),
                (
                    "ontology",
                    "concept graph whose surface forms define the token graph; demo graph when both are null",
                ),
            ]);
            d.extend(fields("retrofit.", RETROFIT));
            d
        },
    },
    CommandInfo {
        name: "kb-match",
        summary: "tag concepts in every pair",
        reproduces: "concept recognition in premises and hypotheses",
        defaults: || value_of(KbMatchConfig::default()),
        docs: || {
            plain(&[
                ("ontology", "concept graph JSONL; demo graph when null"),
                ("dataset", "pairs JSONL to tag"),
            ])
        },
    },
    CommandInfo {
        name: "kb-paths",
        summary: "shortest path lengths between concept ids",
        reproduces: "path lengths between concepts in the ontology",
        defaults: || value_of(KbPathsConfig::default()),
        docs: || {
            plain(&[
                ("ontology", "concept graph JSONL; demo graph when null"),
                ("pairs", "list of [from, to] concept id pairs"),
            ])
        },
    },
    CommandInfo {
        name: "kb-histogram",
        summary: "histogram of minimum premise-hypothesis concept distances",
        reproduces: "distribution of concept distances between premises and hypotheses",
        defaults: || value_of(KbHistogramConfig::default()),
        docs: || {
            plain(&[
                ("ontology", "concept graph JSONL; demo graph when null"),
                ("dataset", "pairs JSONL"),
            ])
        },
    },
    CommandInfo {
        name: "train",
        summary: "in-domain multi-seed training and evaluation",
        reproduces: "test accuracy of the feature baseline, BOW, InferSent and ESIM",
        defaults: || value_of(ExperimentConfig::default()),
        docs: || experiment_docs(&ExperimentConfig::default()),
    },
    CommandInfo {
        name: "transfer",
        summary: "direct, sequential or multi-target transfer between domains",
        reproduces: "accuracy gains of the transfer regimes over in-domain training",
        defaults: || value_of(transfer_defaults()),
        docs: || experiment_docs(&transfer_defaults()),
    },
    CommandInfo {
        name: "eval",
        summary: "score a saved run on a split",
        reproduces: "accuracy of any trained model on any split",
        defaults: || value_of(EvalConfig::default()),
        docs: || {
            let mut d = plain(&[("run", "run directory {experiment}/{seed} holding the saved model")]);
            d.extend(plain(SCORING));
            d
        },
    },
    CommandInfo {
        name: "ensemble",
        summary: "sum the predicted distributions of several runs",
        reproduces: "the ensemble of models trained with different seeds",
        defaults: || value_of(EnsembleConfig::default()),
        docs: || {
            let mut d = plain(&[("runs", "run directories whose predictions are summed")]);
            d.extend(plain(SCORING));
            d
        },
    },
    CommandInfo {
        name: "probe-hypothesis-only",
        summary: "train with every premise replaced by a placeholder",
        reproduces: "the premise-oblivious classifier that measures annotation artifacts",
        defaults: || value_of(probe_defaults()),
        docs: || experiment_docs(&probe_defaults()),
    },
    CommandInfo {
        name: "report-gains",
        summary: "accuracy deltas of experiment reports against a baseline",
        reproduces: "absolute accuracy gain tables by source domain, transfer mode and model",
        defaults: || value_of(ReportGainsConfig::default()),
        docs: || {
            plain(&[
                ("baseline", "report.json of the baseline experiment"),
                ("variants", "report.json files compared against the baseline"),
            ])
        },
    },
    CommandInfo {
        name: "grad-check",
        summary: "finite-difference check of every primitive and model variant",
        reproduces: "implementation check with no published counterpart",
        defaults: || value_of(GradCheckConfig::default()),
        docs: || {
            plain(&[
                ("instances", "randomized instances per primitive and per model variant"),
                ("seed", "seed of the first instance; instance i uses seed + i"),
                ("tolerance", "maximum relative error"),
            ])
        },
    },
];

/// Leaf values of `value` keyed by dotted path. Arrays and nulls are leaves.
pub fn flatten_defaults(value: &Value) -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            _ => out.push((prefix.to_string(), v.clone())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn render_default(v: &Value) -> String {
    match v {
        Value::String(s) if s.is_empty() => "(required)".into(),
        Value::Null => "null".into(),
        other => other.to_string(),
    }
}

pub fn find_command(name: &str) -> Result<&'static CommandInfo> {
    COMMANDS.iter().find(|c| c.name == name).ok_or_else(|| {
        let valid: Vec<&str> = COMMANDS.iter().map(|c| c.name).collect();
        Error::Config {
            key: "subcommand".into(),
            message: format!("unknown subcommand `{name}`; valid subcommands: {}", valid.join(", ")),
        }
    })
}

/// Help text for one subcommand, generated from its config schema.
pub fn describe(name: &str) -> Result<String> {
    let info = find_command(name)?;
    let docs = info.docs();
    let mut s = String::new();
    let _ = writeln!(s, "mednli {}: {}", info.name, info.summary);
    let _ = writeln!(s, "reproduces: {}", info.reproduces);
    let _ = writeln!(s);
    let _ = writeln!(s, "usage: mednli {} [--config FILE] [--set KEY=VALUE]... [--out DIR]", info.name);
    let _ = writeln!(s, "  --config FILE     JSON config; missing keys take the defaults below");
    let _ = writeln!(s, "  --set KEY=VALUE   dotted override, repeatable; the value parses as JSON, else as a string");
    let _ = writeln!(s, "  --out DIR         artifact directory (default: out); receives config.resolved.json");
    let _ = writeln!(s);
    let _ = writeln!(s, "config keys (schema `{}`; drop the schema prefix in files and overrides):", info.name);
    for (key, default) in flatten_defaults(&(info.defaults)()) {
        let doc = docs.iter().find(|(k, _)| *k == key).map(|(_, d)| *d).unwrap_or("");
        let _ = writeln!(s, "  {}.{} = {}", info.name, key, render_default(&default));
        let _ = writeln!(s, "      {doc}");
    }
    Ok(s)
}

/// Keys of the defaults without documentation, and documented keys that
/// are not in the defaults.
pub fn doc_drift(info: &CommandInfo) -> (Vec<String>, Vec<String>) {
    let keys: BTreeSet<String> = flatten_defaults(&(info.defaults)()).into_iter().map(|(k, _)| k).collect();
    let documented: BTreeSet<String> = info.docs().into_iter().map(|(k, _)| k).collect();
    (keys.difference(&documented).cloned().collect(), documented.difference(&keys).cloned().collect())
}
