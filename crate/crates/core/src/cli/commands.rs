use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::sentences::DEFAULT_SENTENCE_ABBREVIATIONS;
use crate::data::stats::DEFAULT_HISTOGRAM_EDGES;
use crate::data::{
    annotation_agreement, dataset_stats, generate_synthetic_dataset, ingest_annotations, parse_annotation_records,
    parse_prompt_file, prepare_annotation_batch, read_split, render_split, segment_note_sections, split_by_premise, tokenize,
    DatasetSplit, Label, NliPair, NoteSection, PremiseCandidate, SectionAliases, SentenceSplitter, SplitName, SynthDomain,
    SynthSpec,
};
use crate::embeddings::{
    fine_tune_chain, retrofit, train_subword_skipgram, Adjacency, EmbeddingMatrix, RetrofitConfig, SkipGramConfig,
};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::harness::experiment::{CHECKPOINT_FILE, GBM_FILE, MANIFEST_FILE, TARGET_HEAD};
use crate::harness::fidelity::{fidelity_suite, FidelityCase, DEFAULT_TOLERANCE};
use crate::harness::{
    ensemble_predict, evaluate_predictions, gain_table, hypothesis_only_probe, predict_pairs, render_gains_csv, run_experiment,
    DataSource, ExperimentConfig, GbmBundle, Metrics, MultiSeedReport, TransferMode,
};
use crate::models::{NliModel, Prediction, DEFAULT_HEAD};
use crate::ontology::{lexical_adjacency, match_concepts, path_histogram, shortest_path_len, ConceptGraph, PATH_CAP};

fn missing(key: &str) -> Error {
    Error::Config {
        key: key.into(),
        message: "required path is not set".into(),
    }
}

fn require(path: &Path, key: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        Err(missing(key))
    } else {
        Ok(())
    }
}

/// Prefixes the key of a configuration error raised by a nested section.
fn nested<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { key, message } => Error::Config {
            key: format!("{section}.{key}"),
            message,
        },
        other => other,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_file(path, out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path.display(), i + 1, e.to_string())))
        .collect()
}

fn load_graph(path: Option<&Path>) -> Result<ConceptGraph> {
    match path {
        Some(p) => ConceptGraph::load(p),
        None => Ok(ConceptGraph::demo()),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<NliPair>> {
    let outcome = read_split(path, SplitName::Test)?;
    if outcome.skipped_unlabeled > 0 {
        eprintln!("{}: skipped {} unlabeled records", path.display(), outcome.skipped_unlabeled);
    }
    Ok(outcome.split.pairs)
}

// ---------------------------------------------------------------- data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSegmentConfig {
    pub input: PathBuf,
    pub aliases: Option<PathBuf>,
}

impl Default for DataSegmentConfig {
    fn default() -> Self {
        DataSegmentConfig {
            input: PathBuf::new(),
            aliases: None,
        }
    }
}

pub fn data_segment(cfg: &DataSegmentConfig, out: &Path) -> Result<()> {
    require(&cfg.input, "input")?;
    let aliases = match &cfg.aliases {
        Some(p) => SectionAliases::load(p)?,
        None => SectionAliases::default(),
    };
    let mut notes: Vec<PathBuf> = if cfg.input.is_dir() {
        let entries = std::fs::read_dir(&cfg.input).map_err(|e| Error::io(&cfg.input, e))?;
        let mut v = Vec::new();
        for entry in entries {
            let p = entry.map_err(|e| Error::io(&cfg.input, e))?.path();
            if p.extension().is_some_and(|x| x == "txt") {
                v.push(p);
            }
        }
        v
    } else {
        vec![cfg.input.clone()]
    };
    notes.sort();
    let mut sections: Vec<NoteSection> = Vec::new();
    for p in &notes {
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        sections.extend(segment_note_sections(&id, &read_to_string(p)?, &aliases));
    }
    eprintln!("{} notes, {} sections", notes.len(), sections.len());
    write_jsonl(&out.join("sections.jsonl"), &sections)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSplitSentencesConfig {
    pub input: PathBuf,
    pub sections: Vec<String>,
    pub abbreviations: Vec<String>,
}

impl Default for DataSplitSentencesConfig {
    fn default() -> Self {
        DataSplitSentencesConfig {
            input: PathBuf::new(),
            sections: vec!["past_medical_history".into()],
            abbreviations: DEFAULT_SENTENCE_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn data_split_sentences(cfg: &DataSplitSentencesConfig, out: &Path) -> Result<()> {
    require(&cfg.input, "input")?;
    let splitter = SentenceSplitter::with_abbreviations(cfg.abbreviations.iter().map(String::as_str));
    let sections: Vec<NoteSection> = read_jsonl(&cfg.input)?;
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut candidates = Vec::new();
    for s in sections {
        if !cfg.sections.is_empty() && !cfg.sections.contains(&s.header) {
            continue;
        }
        for sentence in splitter.split(&s.body) {
            let k = counters.entry(s.note_id.clone()).or_default();
            candidates.push(PremiseCandidate {
                id: format!("{}.{}", s.note_id, k),
                text: sentence,
            });
            *k += 1;
        }
    }
    eprintln!("{} candidate premises", candidates.len());
    write_jsonl(&out.join("candidates.jsonl"), &candidates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSamplePromptsConfig {
    pub input: PathBuf,
    pub n: usize,
    pub seed: u64,
}

impl Default for DataSamplePromptsConfig {
    fn default() -> Self {
        DataSamplePromptsConfig {
            input: PathBuf::new(),
            n: 50,
            seed: 1,
        }
    }
}

pub fn data_sample_prompts(cfg: &DataSamplePromptsConfig, out: &Path) -> Result<()> {
    require(&cfg.input, "input")?;
    let candidates: Vec<PremiseCandidate> = read_jsonl(&cfg.input)?;
    write_file(&out.join("prompts.txt"), prepare_annotation_batch(&candidates, cfg.n, cfg.seed)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataIngestConfig {
    pub prompts: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Debug, Serialize)]
struct AgreementReport {
    pairs: usize,
    discards: usize,
    judged_hypotheses: usize,
    kappa: Option<f64>,
}

pub fn data_ingest(cfg: &DataIngestConfig, out: &Path) -> Result<()> {
    require(&cfg.prompts, "prompts")?;
    require(&cfg.annotations, "annotations")?;
    let premises: HashMap<String, String> =
        parse_prompt_file(&read_to_string(&cfg.prompts)?).into_iter().map(|c| (c.id, c.text)).collect();
    let records = parse_annotation_records(&read_to_string(&cfg.annotations)?, &cfg.annotations.display().to_string())?;
    let ingested = ingest_annotations(&records, &premises);
    let agreement = annotation_agreement(&records)?;
    let split = DatasetSplit::new(SplitName::Train, ingested.pairs);
    write_file(&out.join("pairs.jsonl"), render_split(&split))?;
    write_jsonl(&out.join("discards.jsonl"), &ingested.discards)?;
    eprintln!("{} pairs, {} discarded records", split.len(), ingested.discards.len());
    write_json(
        &out.join("agreement.json"),
        &AgreementReport {
            pairs: split.len(),
            discards: ingested.discards.len(),
            judged_hypotheses: agreement.map_or(0, |a| a.1),
            kappa: agreement.map(|a| a.0),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataStatsConfig {
    pub dataset: PathBuf,
    pub histogram_edges: Vec<usize>,
}

impl Default for DataStatsConfig {
    fn default() -> Self {
        DataStatsConfig {
            dataset: PathBuf::new(),
            histogram_edges: DEFAULT_HISTOGRAM_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Serialize)]
struct StatsReport {
    skipped_unlabeled: BTreeMap<String, usize>,
    #[serde(flatten)]
    stats: crate::data::DatasetStats,
}

pub fn data_stats(cfg: &DataStatsConfig, out: &Path) -> Result<()> {
    require(&cfg.dataset, "dataset")?;
    let mut splits = Vec::new();
    let mut skipped = BTreeMap::new();
    for name in SplitName::ALL {
        let outcome = read_split(&cfg.dataset.join(format!("{name}.jsonl")), name)?;
        skipped.insert(name.to_string(), outcome.skipped_unlabeled);
        splits.push(outcome.split);
    }
    let refs: Vec<&DatasetSplit> = splits.iter().collect();
    let stats = nested("histogram_edges", dataset_stats(&refs, &cfg.histogram_edges))?;
    for s in &stats.splits {
        eprintln!(
            "{}: {} pairs, premise mean {:.1} max {}, hypothesis mean {:.1} max {}",
            s.name, s.pairs, s.premise.mean, s.premise.max, s.hypothesis.mean, s.hypothesis.max
        );
    }
    write_json(
        &out.join("stats.json"),
        &StatsReport {
            skipped_unlabeled: skipped,
            stats,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSynthConfig {
    pub synth: SynthSpec,
    pub seed: u64,
}

impl Default for DataSynthConfig {
    fn default() -> Self {
        DataSynthConfig {
            synth: SynthSpec::default(),
            seed: 1,
        }
    }
}

pub fn data_synth(cfg: &DataSynthConfig, out: &Path) -> Result<()> {
    nested("synth", generate_synthetic_dataset(&cfg.synth, cfg.seed))?.save_dir(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSplitConfig {
    pub input: PathBuf,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for DataSplitConfig {
    fn default() -> Self {
        DataSplitConfig {
            input: PathBuf::new(),
            ratios: [0.8, 0.1, 0.1],
            seed: 1,
        }
    }
}

pub fn data_split(cfg: &DataSplitConfig, out: &Path) -> Result<()> {
    require(&cfg.input, "input")?;
    let pairs = read_pairs(&cfg.input)?;
    let data = split_by_premise(&pairs, cfg.ratios, cfg.seed).map_err(|e| match e {
        Error::InvalidArgument(message) => Error::Config {
            key: "ratios".into(),
            message,
        },
        other => other,
    })?;
    eprintln!("train {} / dev {} / test {}", data.train.len(), data.dev.len(), data.test.len());
    data.save_dir(out)
}

// ---------------------------------------------------------------- embeddings

fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_to_string(path)?.lines().map(tokenize).filter(|t| !t.is_empty()).collect())
}

#[derive(Debug, Serialize)]
struct LossReport<'a> {
    provenance: &'a str,
    vocabulary: usize,
    epoch_losses: &'a [f64],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedTrainConfig {
    pub corpus: PathBuf,
    pub skipgram: SkipGramConfig,
}

pub fn embed_train(cfg: &EmbedTrainConfig, out: &Path) -> Result<()> {
    require(&cfg.corpus, "corpus")?;
    let corpus = read_corpus(&cfg.corpus)?;
    let trained = nested("skipgram", train_subword_skipgram(&corpus, &cfg.skipgram, cfg.skipgram.seed))?;
    trained.matrix.save(&out.join("vectors.txt"))?;
    write_json(
        &out.join("losses.json"),
        &LossReport {
            provenance: &trained.matrix.provenance,
            vocabulary: trained.matrix.len(),
            epoch_losses: &trained.epoch_losses,
        },
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedFinetuneConfig {
    pub init: PathBuf,
    pub corpora: Vec<PathBuf>,
    pub skipgram: SkipGramConfig,
}

pub fn embed_finetune(cfg: &EmbedFinetuneConfig, out: &Path) -> Result<()> {
    require(&cfg.init, "init")?;
    if cfg.corpora.is_empty() {
        return Err(Error::Config {
            key: "corpora".into(),
            message: "needs at least one corpus".into(),
        });
    }
    let init = EmbeddingMatrix::load(&cfg.init)?;
    let corpora = cfg
        .corpora
        .iter()
        .map(|p| Ok((p.display().to_string(), read_corpus(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let trained = nested("skipgram", fine_tune_chain(&init, &corpora, &cfg.skipgram, cfg.skipgram.seed))?;
    trained.matrix.save(&out.join("vectors.txt"))?;
    write_json(
        &out.join("losses.json"),
        &LossReport {
            provenance: &trained.matrix.provenance,
            vocabulary: trained.matrix.len(),
            epoch_losses: &trained.epoch_losses,
        },
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedRetrofitConfig {
    pub vectors: PathBuf,
    pub adjacency: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub retrofit: RetrofitConfig,
}

#[derive(Debug, Serialize)]
struct ObjectiveReport<'a> {
    edges: usize,
    objective: &'a [f64],
}

pub fn embed_retrofit(cfg: &EmbedRetrofitConfig, out: &Path) -> Result<()> {
    require(&cfg.vectors, "vectors")?;
    let matrix = EmbeddingMatrix::load(&cfg.vectors)?;
    let adjacency = match (&cfg.adjacency, &cfg.ontology) {
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                key: "adjacency".into(),
                message: "set either adjacency or ontology, not both".into(),
            })
        }
        (Some(p), None) => Adjacency::load(p)?,
        (None, o) => lexical_adjacency(&load_graph(o.as_deref())?),
    };
    let result = nested("retrofit", retrofit(&matrix, &adjacency, &cfg.retrofit))?;
    eprintln!(
        "objective {:.6} -> {:.6}",
        result.objective[0],
        result.objective.last().copied().unwrap_or(f64::NAN)
    );
    result.matrix.save(&out.join("vectors.txt"))?;
    write_json(
        &out.join("objective.json"),
        &ObjectiveReport {
            edges: adjacency.num_edges(),
            objective: &result.objective,
        },
    )
}

// ---------------------------------------------------------------- ontology

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbMatchConfig {
    pub ontology: Option<PathBuf>,
    pub dataset: PathBuf,
}

#[derive(Debug, Serialize)]
struct PairMatches {
    pair_id: String,
    premise: Vec<crate::ontology::ConceptMatch>,
    hypothesis: Vec<crate::ontology::ConceptMatch>,
}

pub fn kb_match(cfg: &KbMatchConfig, out: &Path) -> Result<()> {
    require(&cfg.dataset, "dataset")?;
    let graph = load_graph(cfg.ontology.as_deref())?;
    let rows: Vec<PairMatches> = read_pairs(&cfg.dataset)?
        .iter()
        .map(|p| PairMatches {
            pair_id: p.pair_id.clone(),
            premise: match_concepts(&p.premise, &graph),
            hypothesis: match_concepts(&p.hypothesis, &graph),
        })
        .collect();
    let both = rows.iter().filter(|r| !r.premise.is_empty() && !r.hypothesis.is_empty()).count();
    eprintln!("{} pairs, {} with concepts on both sides", rows.len(), both);
    write_jsonl(&out.join("matches.jsonl"), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbPathsConfig {
    pub ontology: Option<PathBuf>,
    pub pairs: Vec<[String; 2]>,
}

impl Default for KbPathsConfig {
    fn default() -> Self {
        KbPathsConfig {
            ontology: None,
            pairs: vec![["C020".into(), "C021".into()], ["C022".into(), "C005".into()]],
        }
    }
}

#[derive(Debug, Serialize)]
struct PathRow<'a> {
    from: &'a str,
    to: &'a str,
    length: Option<usize>,
}

pub fn kb_paths(cfg: &KbPathsConfig, out: &Path) -> Result<()> {
    let graph = load_graph(cfg.ontology.as_deref())?;
    let rows = cfg
        .pairs
        .iter()
        .map(|[a, b]| {
            Ok(PathRow {
                from: a,
                to: b,
                length: shortest_path_len(&graph, a, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(&out.join("paths.json"), &rows)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbHistogramConfig {
    pub ontology: Option<PathBuf>,
    pub dataset: PathBuf,
}

#[derive(Debug, Serialize)]
struct HistogramReport {
    cap: usize,
    total: usize,
    counts: Vec<usize>,
    no_path: usize,
}

pub fn kb_histogram(cfg: &KbHistogramConfig, out: &Path) -> Result<()> {
    require(&cfg.dataset, "dataset")?;
    let graph = load_graph(cfg.ontology.as_deref())?;
    let pairs = read_pairs(&cfg.dataset)?;
    let h = path_histogram(&pairs, &graph);
    write_json(
        &out.join("histogram.json"),
        &HistogramReport {
            cap: PATH_CAP,
            total: h.total(),
            counts: h.counts,
            no_path: h.no_path,
        },
    )
}

// ---------------------------------------------------------------- harness

pub fn transfer_defaults() -> ExperimentConfig {
    ExperimentConfig {
        name: "transfer".into(),
        transfer: TransferMode::Sequential,
        source: DataSource::Synthetic(SynthSpec {
            domain: SynthDomain::General,
            train: 300,
            ..Default::default()
        }),
        target: Some(DataSource::Synthetic(SynthSpec::default())),
        ..Default::default()
    }
}

pub fn probe_defaults() -> ExperimentConfig {
    ExperimentConfig {
        name: "probe".into(),
        source: DataSource::Synthetic(SynthSpec {
            planted_artifact: true,
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn summarize(report: &MultiSeedReport) {
    eprintln!(
        "{} [{} / {}]: dev {:.4} ± {:.4}, test {:.4} ± {:.4} over {} seeds",
        report.experiment,
        report.model,
        report.transfer,
        report.dev_accuracy.mean,
        report.dev_accuracy.std,
        report.test_accuracy.mean,
        report.test_accuracy.std,
        report.seeds.len()
    );
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    if cfg.transfer != TransferMode::None {
        return Err(Error::Config {
            key: "transfer".into(),
            message: "train runs in-domain only; use the transfer command".into(),
        });
    }
    summarize(&run_experiment(cfg, Some(out))?);
    Ok(())
}

pub fn transfer(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    if cfg.transfer == TransferMode::None {
        return Err(Error::Config {
            key: "transfer".into(),
            message: "choose direct, sequential or multi-target".into(),
        });
    }
    summarize(&run_experiment(cfg, Some(out))?);
    Ok(())
}

pub fn probe_hypothesis_only(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    summarize(&hypothesis_only_probe(cfg, Some(out))?);
    Ok(())
}

/// Inputs shared by commands that score saved runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// A run directory `{experiment}/{seed}`.
    pub run: PathBuf,
    pub dataset: PathBuf,
    pub ontology: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub head: Option<String>,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            run: PathBuf::new(),
            dataset: PathBuf::new(),
            ontology: None,
            embeddings: None,
            head: None,
            batch_size: 32,
        }
    }
}

struct Scoring<'a> {
    ontology: Option<&'a Path>,
    embeddings: Option<&'a Path>,
    head: Option<&'a str>,
    batch_size: usize,
}

/// Predictions of the model saved in `dir`, whichever learner produced it.
fn predict_run(dir: &Path, pairs: &[NliPair], s: &Scoring) -> Result<Vec<Prediction>> {
    if s.batch_size == 0 {
        return Err(Error::Config {
            key: "batch_size".into(),
            message: "must be at least 1".into(),
        });
    }
    let gbm = dir.join(GBM_FILE);
    if gbm.exists() {
        let bundle = GbmBundle::load(&gbm)?;
        let vectors = s
            .embeddings
            .map(Path::to_path_buf)
            .or_else(|| bundle.embeddings.clone())
            .map(|p| EmbeddingMatrix::load(&p))
            .transpose()?;
        let graph = load_graph(s.ontology.or(bundle.ontology.as_deref()))?;
        let rows = bundle.features(pairs, vectors.as_ref(), &graph)?;
        return bundle.predict(&rows);
    }
    let model = NliModel::load(&dir.join(CHECKPOINT_FILE), &dir.join(MANIFEST_FILE))?;
    let head = match s.head {
        Some(h) => h.to_string(),
        None if model.has_head(TARGET_HEAD) => TARGET_HEAD.to_string(),
        None => DEFAULT_HEAD.to_string(),
    };
    let graph = load_graph(s.ontology)?;
    predict_pairs(&model, pairs, &head, Some(&graph), s.batch_size)
}

#[derive(Debug, Serialize)]
struct PredictionRow<'a> {
    pair_id: &'a str,
    gold: Label,
    predicted: Label,
    probs: [f64; 3],
}

fn prediction_rows<'a>(pairs: &'a [NliPair], preds: &[Prediction]) -> Vec<PredictionRow<'a>> {
    pairs
        .iter()
        .zip(preds)
        .map(|(p, q)| PredictionRow {
            pair_id: &p.pair_id,
            gold: p.label,
            predicted: q.label(),
            probs: q.probs,
        })
        .collect()
}

fn metrics_of(pairs: &[NliPair], preds: &[Prediction]) -> Result<Metrics> {
    let gold: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    let predicted: Vec<Label> = preds.iter().map(Prediction::label).collect();
    evaluate_predictions(&gold, &predicted)
}

pub fn eval(cfg: &EvalConfig, out: &Path) -> Result<()> {
    require(&cfg.run, "run")?;
    require(&cfg.dataset, "dataset")?;
    let pairs = read_pairs(&cfg.dataset)?;
    let scoring = Scoring {
        ontology: cfg.ontology.as_deref(),
        embeddings: cfg.embeddings.as_deref(),
        head: cfg.head.as_deref(),
        batch_size: cfg.batch_size,
    };
    let preds = predict_run(&cfg.run, &pairs, &scoring)?;
    let metrics = metrics_of(&pairs, &preds)?;
    eprintln!("accuracy {:.4} on {} pairs", metrics.accuracy, metrics.n);
    write_jsonl(&out.join("predictions.jsonl"), &prediction_rows(&pairs, &preds))?;
    write_json(&out.join("metrics.json"), &metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub runs: Vec<PathBuf>,
    pub dataset: PathBuf,
    pub ontology: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub head: Option<String>,
    pub batch_size: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            runs: Vec::new(),
            dataset: PathBuf::new(),
            ontology: None,
            embeddings: None,
            head: None,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Serialize)]
struct EnsembleReport {
    members: Vec<(String, Metrics)>,
    ensemble: Metrics,
}

pub fn ensemble(cfg: &EnsembleConfig, out: &Path) -> Result<()> {
    if cfg.runs.is_empty() {
        return Err(Error::Config {
            key: "runs".into(),
            message: "needs at least one run directory".into(),
        });
    }
    require(&cfg.dataset, "dataset")?;
    let pairs = read_pairs(&cfg.dataset)?;
    let scoring = Scoring {
        ontology: cfg.ontology.as_deref(),
        embeddings: cfg.embeddings.as_deref(),
        head: cfg.head.as_deref(),
        batch_size: cfg.batch_size,
    };
    let mut per_member = Vec::new();
    let mut members = Vec::new();
    for dir in &cfg.runs {
        let preds = predict_run(dir, &pairs, &scoring)?;
        members.push((dir.display().to_string(), metrics_of(&pairs, &preds)?));
        per_member.push(preds);
    }
    let combined = (0..pairs.len())
        .map(|i| ensemble_predict(&per_member.iter().map(|m| m[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let metrics = metrics_of(&pairs, &combined)?;
    eprintln!("ensemble of {} runs: accuracy {:.4}", cfg.runs.len(), metrics.accuracy);
    write_jsonl(&out.join("predictions.jsonl"), &prediction_rows(&pairs, &combined))?;
    write_json(
        &out.join("ensemble.json"),
        &EnsembleReport {
            members,
            ensemble: metrics,
        },
    )
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportGainsConfig {
    pub baseline: PathBuf,
    pub variants: Vec<PathBuf>,
}

pub fn report_gains(cfg: &ReportGainsConfig, out: &Path) -> Result<()> {
    require(&cfg.baseline, "baseline")?;
    if cfg.variants.is_empty() {
        return Err(Error::Config {
            key: "variants".into(),
            message: "needs at least one report".into(),
        });
    }
    let baseline = MultiSeedReport::load(&cfg.baseline)?;
    let variants = cfg.variants.iter().map(|p| MultiSeedReport::load(p)).collect::<Result<Vec<_>>>()?;
    let rows = gain_table(&baseline, &variants);
    write_file(&out.join("gains.csv"), render_gains_csv(&rows))?;
    write_json(&out.join("gains.json"), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            instances: 20,
            seed: 1,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Serialize)]
struct GradCheckSummary {
    checks: usize,
    failures: usize,
    max_rel_error: f64,
    cases: Vec<FidelityCase>,
}

pub fn grad_check(cfg: &GradCheckConfig, out: &Path) -> Result<()> {
    if cfg.instances == 0 {
        return Err(Error::Config {
            key: "instances".into(),
            message: "must be at least 1".into(),
        });
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::Config {
            key: "tolerance".into(),
            message: "must be positive".into(),
        });
    }
    let cases = fidelity_suite(cfg.instances, cfg.seed, cfg.tolerance)?;
    let failures = cases.iter().filter(|c| !c.passed).count();
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    eprintln!("{} checks, {} failures, max relative error {:.3e}", cases.len(), failures, max_rel_error);
    write_json(
        &out.join("gradcheck.json"),
        &GradCheckSummary {
            checks: cases.len(),
            failures,
            max_rel_error,
            cases,
        },
    )?;
    if failures > 0 {
        return Err(Error::invalid(format!("{failures} gradient checks exceeded tolerance {}", cfg.tolerance)));
    }
    Ok(())
}
