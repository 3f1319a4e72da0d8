use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Learner, TransferMode};
use super::metrics::{evaluate_predictions, Metrics, Summary};
use super::train::{evaluate_model, train_model, PhaseHistory, TrainOptions};
use crate::autodiff::{AdamState, ParamStore};
use crate::data::vocab::EMPTY_PREMISE_TOKEN;
use crate::data::{build_vocab, Dataset, DatasetSplit, Label, NliPair, Vocabulary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::models::{extract_features, gbm_predict, gbm_train, FeatureContext, GbmModel, IdfTable, NliModel, DEFAULT_HEAD};
use crate::ontology::ConceptGraph;

pub const SOURCE_HEAD: &str = "source";
pub const TARGET_HEAD: &str = "target";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GBM_FILE: &str = "gbm.json";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";

/// Everything shared by the seeds of one experiment.
#[derive(Debug)]
pub struct Resources {
    pub source: Dataset,
    pub target: Option<Dataset>,
    pub vocab: Vocabulary,
    pub vectors: Option<EmbeddingMatrix>,
    pub graph: ConceptGraph,
}

impl Resources {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let source = cfg.source.load(cfg.data_seed)?;
        let target = cfg.target.as_ref().map(|t| t.load(cfg.data_seed.wrapping_add(1))).transpose()?;
        Self::from_parts(cfg, source, target)
    }

    /// Builds the union vocabulary over the training splits and loads the
    /// optional vectors and graph.
    pub fn from_parts(cfg: &ExperimentConfig, source: Dataset, target: Option<Dataset>) -> Result<Self> {
        let mut splits: Vec<&DatasetSplit> = vec![&source.train];
        if let Some(t) = &target {
            splits.push(&t.train);
        }
        let vocab = build_vocab(&splits, cfg.min_count)?;
        let vectors = cfg.embeddings.as_deref().map(EmbeddingMatrix::load).transpose()?;
        let graph = match &cfg.ontology {
            Some(p) => ConceptGraph::load(p)?,
            None => ConceptGraph::demo(),
        };
        Ok(Resources {
            source,
            target,
            vocab,
            vectors,
            graph,
        })
    }

    /// The domain a run is scored on.
    pub fn eval_data(&self, mode: TransferMode) -> Result<&Dataset> {
        match mode {
            TransferMode::None => Ok(&self.source),
            _ => self.target.as_ref().ok_or_else(|| Error::Config {
                key: "target".into(),
                message: format!("transfer mode `{mode}` needs a target domain"),
            }),
        }
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub experiment: String,
    pub seed: u64,
    pub model: String,
    pub transfer: TransferMode,
    pub source_domain: String,
    pub eval_domain: String,
    /// Every training phase in order; the top-level losses repeat the last one.
    pub phases: Vec<PhaseHistory>,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub dev: Metrics,
    pub test: Metrics,
    /// Excluded from serialized metrics so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Parameter groups of a two-head model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub shared: Vec<String>,
    pub source_head: Vec<String>,
    pub target_head: Vec<String>,
}

impl TransferPlan {
    /// Classifier heads `head.{source}.*` and `head.{target}.*`; everything
    /// else (embeddings, encoders, projections) is shared.
    pub fn new(params: &ParamStore, source: &str, target: &str) -> Result<Self> {
        let (sp, tp) = (format!("head.{source}."), format!("head.{target}."));
        let mut plan = TransferPlan {
            shared: Vec::new(),
            source_head: Vec::new(),
            target_head: Vec::new(),
        };
        for name in params.names() {
            if name.starts_with(&sp) {
                plan.source_head.push(name.to_string());
            } else if name.starts_with(&tp) {
                plan.target_head.push(name.to_string());
            } else if name.starts_with("head.") {
                return Err(Error::invalid(format!("parameter `{name}` belongs to neither transfer head")));
            } else {
                plan.shared.push(name.to_string());
            }
        }
        plan.validate(params)?;
        Ok(plan)
    }

    /// Exhaustive and disjoint over `params`, with both heads non-empty.
    pub fn validate(&self, params: &ParamStore) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for name in self.shared.iter().chain(&self.source_head).chain(&self.target_head) {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("`{name}` is in more than one transfer group")));
            }
            if !params.contains(name) {
                return Err(Error::invalid(format!("transfer plan names unknown parameter `{name}`")));
            }
        }
        if seen.len() != params.len() {
            return Err(Error::invalid("transfer plan does not cover every parameter"));
        }
        if self.source_head.is_empty() || self.target_head.is_empty() {
            return Err(Error::invalid("transfer plan needs parameters in both heads"));
        }
        Ok(())
    }

    pub fn in_phase_one(&self, name: &str) -> bool {
        self.shared.iter().chain(&self.source_head).any(|n| n == name)
    }

    pub fn in_phase_two(&self, name: &str) -> bool {
        self.shared.iter().chain(&self.target_head).any(|n| n == name)
    }
}

/// Trains `model` under one transfer regime and returns the phases and the
/// head used for predictions on the evaluation domain.
#[allow(clippy::too_many_arguments)]
pub fn transfer_run(
    mode: TransferMode,
    model: &mut NliModel,
    source: &Dataset,
    target: Option<&Dataset>,
    graph: Option<&ConceptGraph>,
    opts: &TrainOptions,
    carry_optimizer: bool,
    plan: Option<&TransferPlan>,
) -> Result<(Vec<PhaseHistory>, String)> {
    let need_target = || {
        target.ok_or_else(|| Error::Config {
            key: "target".into(),
            message: format!("transfer mode `{mode}` needs a target domain"),
        })
    };
    let all = |_: &str| true;
    match mode {
        TransferMode::None | TransferMode::Direct => {
            if mode == TransferMode::Direct {
                need_target()?;
            }
            let mut adam = AdamState::new(opts.adam);
            let h =
                train_model(model, &source.train.pairs, &source.dev.pairs, DEFAULT_HEAD, graph, opts, &mut adam, &all, "source")?;
            Ok((vec![h], DEFAULT_HEAD.to_string()))
        }
        TransferMode::Sequential => {
            let target = need_target()?;
            let mut adam = AdamState::new(opts.adam);
            let first =
                train_model(model, &source.train.pairs, &source.dev.pairs, DEFAULT_HEAD, graph, opts, &mut adam, &all, "source")?;
            if !carry_optimizer {
                adam = AdamState::new(opts.adam);
            }
            let second =
                train_model(model, &target.train.pairs, &target.dev.pairs, DEFAULT_HEAD, graph, opts, &mut adam, &all, "target")?;
            Ok((vec![first, second], DEFAULT_HEAD.to_string()))
        }
        TransferMode::MultiTarget => {
            let target = need_target()?;
            let plan = plan.ok_or_else(|| Error::invalid("multi-target transfer needs a transfer plan"))?;
            plan.validate(&model.params)?;
            let mut adam = AdamState::new(opts.adam);
            let p1 = |n: &str| plan.in_phase_one(n);
            let first =
                train_model(model, &source.train.pairs, &source.dev.pairs, SOURCE_HEAD, graph, opts, &mut adam, &p1, "source")?;
            let mut adam = AdamState::new(opts.adam);
            let p2 = |n: &str| plan.in_phase_two(n);
            let second =
                train_model(model, &target.train.pairs, &target.dev.pairs, TARGET_HEAD, graph, opts, &mut adam, &p2, "target")?;
            Ok((vec![first, second], TARGET_HEAD.to_string()))
        }
    }
}

/// A trained model of either learner.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Neural { model: NliModel, head: String },
    Gbm(GbmBundle),
}

/// The boosting model plus what feature extraction needs at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmBundle {
    pub model: GbmModel,
    pub idf: IdfTable,
    pub negations: Vec<String>,
    pub embedding_dim: usize,
    pub embeddings: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
}

impl GbmBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: GbmBundle = serde_json::from_str(&read_to_string(path)?)?;
        b.model.validate()?;
        Ok(b)
    }

    pub fn features(&self, pairs: &[NliPair], vectors: Option<&EmbeddingMatrix>, graph: &ConceptGraph) -> Result<Vec<Vec<f64>>> {
        feature_rows(pairs, vectors, self.embedding_dim, graph, &self.idf, &self.negations)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<crate::models::Prediction>> {
        rows.iter().map(|r| gbm_predict(&self.model, r)).collect()
    }
}

fn feature_rows(
    pairs: &[NliPair],
    vectors: Option<&EmbeddingMatrix>,
    dim: usize,
    graph: &ConceptGraph,
    idf: &IdfTable,
    negations: &[String],
) -> Result<Vec<Vec<f64>>> {
    let fallback;
    let embeddings = match vectors {
        Some(v) => v,
        None => {
            fallback = EmbeddingMatrix::new(Vec::new(), dim, Vec::new(), "random")?;
            &fallback
        }
    };
    let ctx = FeatureContext {
        embeddings,
        graph,
        idf,
        negations,
    };
    Ok(pairs.iter().map(|p| extract_features(&p.premise, &p.hypothesis, &ctx).0).collect())
}

fn label_list(pairs: &[NliPair]) -> Vec<Label> {
    pairs.iter().map(|p| p.label).collect()
}

fn run_gbm(cfg: &ExperimentConfig, res: &Resources, seed: u64) -> Result<(Vec<PhaseHistory>, Metrics, Metrics, GbmBundle)> {
    let idf = IdfTable::from_pairs(&res.source.train.pairs);
    let dim = cfg.model.embedding_dim;
    let rows = feature_rows(&res.source.train.pairs, res.vectors.as_ref(), dim, &res.graph, &idf, &cfg.negations)?;
    let model = gbm_train(&rows, &label_list(&res.source.train.pairs), &cfg.gbm, seed)?;
    let bundle = GbmBundle {
        model,
        idf,
        negations: cfg.negations.clone(),
        embedding_dim: dim,
        embeddings: cfg.embeddings.clone(),
        ontology: cfg.ontology.clone(),
    };
    let eval = res.eval_data(cfg.transfer)?;
    let score = |split: &DatasetSplit| -> Result<Metrics> {
        let rows = bundle.features(&split.pairs, res.vectors.as_ref(), &res.graph)?;
        let preds: Vec<Label> = bundle.predict(&rows)?.iter().map(|p| p.label()).collect();
        evaluate_predictions(&label_list(&split.pairs), &preds)
    };
    let dev = score(&eval.dev)?;
    let test = score(&eval.test)?;
    let phase = PhaseHistory {
        phase: "boosting".into(),
        train_losses: bundle.model.train_loss.clone(),
        val_losses: Vec::new(),
        best_epoch: bundle.model.rounds.len(),
        stopped_early: false,
    };
    Ok((vec![phase], dev, test, bundle))
}

pub fn train_options(cfg: &ExperimentConfig, seed: u64) -> TrainOptions {
    TrainOptions {
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        adam: cfg.adam(),
        seed,
    }
}

/// Trains and scores one seed.
pub fn run_seed(cfg: &ExperimentConfig, res: &Resources, seed: u64) -> Result<(RunResult, TrainedModel)> {
    let start = Instant::now();
    let eval = res.eval_data(cfg.transfer)?;
    let (phases, dev, test, model_name, trained) = match cfg.learner {
        Learner::Gbm => {
            let (phases, dev, test, bundle) = run_gbm(cfg, res, seed)?;
            (phases, dev, test, "gbm".to_string(), TrainedModel::Gbm(bundle))
        }
        Learner::Neural => {
            let mut spec = cfg.model.clone();
            spec.seed = seed;
            let heads: &[&str] = if cfg.transfer == TransferMode::MultiTarget {
                &[SOURCE_HEAD, TARGET_HEAD]
            } else {
                &[DEFAULT_HEAD]
            };
            let mut model = NliModel::new(spec, res.vocab.clone(), res.vectors.as_ref(), heads)?;
            let plan = if cfg.transfer == TransferMode::MultiTarget {
                Some(TransferPlan::new(&model.params, SOURCE_HEAD, TARGET_HEAD)?)
            } else {
                None
            };
            let opts = train_options(cfg, seed);
            let (phases, head) = transfer_run(
                cfg.transfer,
                &mut model,
                &res.source,
                res.target.as_ref(),
                Some(&res.graph),
                &opts,
                cfg.carry_optimizer,
                plan.as_ref(),
            )?;
            let dev = evaluate_model(&model, &eval.dev.pairs, &head, Some(&res.graph), cfg.batch_size)?;
            let test = evaluate_model(&model, &eval.test.pairs, &head, Some(&res.graph), cfg.batch_size)?;
            let name = model.spec.name();
            (phases, dev, test, name, TrainedModel::Neural { model, head })
        }
    };
    let last = phases.last().expect("at least one phase").clone();
    let eval_source = match cfg.transfer {
        TransferMode::None => &cfg.source,
        _ => cfg.target.as_ref().expect("validated"),
    };
    let result = RunResult {
        experiment: cfg.name.clone(),
        seed,
        model: model_name,
        transfer: cfg.transfer,
        source_domain: cfg.source.domain_name(),
        eval_domain: eval_source.domain_name(),
        phases,
        train_losses: last.train_losses,
        val_losses: last.val_losses,
        best_epoch: last.best_epoch,
        dev,
        test,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((result, trained))
}

/// Writes `{out}/{experiment}/{seed}/` with the model files and `run.json`.
pub fn save_run(out: &Path, result: &RunResult, trained: &TrainedModel) -> Result<PathBuf> {
    let dir = out.join(&result.experiment).join(result.seed.to_string());
    match trained {
        TrainedModel::Neural { model, .. } => model.save(&dir.join(CHECKPOINT_FILE), &dir.join(MANIFEST_FILE))?,
        TrainedModel::Gbm(bundle) => bundle.save(&dir.join(GBM_FILE))?,
    }
    write_file(&dir.join(RUN_FILE), serde_json::to_string_pretty(result)? + "\n")?;
    Ok(dir)
}

/// Mean and spread over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub experiment: String,
    pub model: String,
    pub transfer: TransferMode,
    pub source_domain: String,
    pub eval_domain: String,
    pub seeds: Vec<u64>,
    pub dev_accuracy: Summary,
    pub test_accuracy: Summary,
    pub runs: Vec<RunResult>,
}

impl MultiSeedReport {
    pub fn from_runs(runs: Vec<RunResult>) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::invalid("report over no runs"))?;
        let dev: Vec<f64> = runs.iter().map(|r| r.dev.accuracy).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.test.accuracy).collect();
        Ok(MultiSeedReport {
            experiment: first.experiment.clone(),
            model: first.model.clone(),
            transfer: first.transfer,
            source_domain: first.source_domain.clone(),
            eval_domain: first.eval_domain.clone(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            dev_accuracy: Summary::of(&dev)?,
            test_accuracy: Summary::of(&test)?,
            runs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path)?)?)
    }
}

/// Runs every seed (up to `cfg.workers` at a time), saving checkpoints
/// under `out` when given.
pub fn run_experiment_with(cfg: &ExperimentConfig, res: &Resources, out: Option<&Path>) -> Result<MultiSeedReport> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for chunk in cfg.seeds.chunks(cfg.workers) {
        let results: Vec<Result<RunResult>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    s.spawn(move || -> Result<RunResult> {
                        let (result, trained) = run_seed(cfg, res, seed)?;
                        if let Some(out) = out {
                            save_run(out, &result, &trained)?;
                        }
                        Ok(result)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
        });
        for r in results {
            runs.push(r?);
        }
    }
    let report = MultiSeedReport::from_runs(runs)?;
    if let Some(out) = out {
        write_file(&out.join(&cfg.name).join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<MultiSeedReport> {
    let res = Resources::load(cfg)?;
    run_experiment_with(cfg, &res, out)
}

/// Replaces every premise with the reserved single-token placeholder.
pub fn hypothesis_only(data: &Dataset) -> Dataset {
    let strip = |split: &DatasetSplit| DatasetSplit {
        name: split.name,
        pairs: split
            .pairs
            .iter()
            .map(|p| NliPair {
                premise: vec![EMPTY_PREMISE_TOKEN.to_string()],
                ..p.clone()
            })
            .collect(),
    };
    Dataset {
        train: strip(&data.train),
        dev: strip(&data.dev),
        test: strip(&data.test),
    }
}

/// Trains the configured model on premise-free pairs of the source domain.
pub fn hypothesis_only_probe(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<MultiSeedReport> {
    let mut cfg = cfg.clone();
    cfg.transfer = TransferMode::None;
    cfg.target = None;
    let source = hypothesis_only(&cfg.source.load(cfg.data_seed)?);
    let res = Resources::from_parts(&cfg, source, None)?;
    run_experiment_with(&cfg, &res, out)
}

/// One row of an accuracy-gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub source_domain: String,
    pub transfer: TransferMode,
    pub model: String,
    pub experiment: String,
    pub baseline: String,
    pub mean_accuracy: f64,
    pub baseline_accuracy: f64,
    pub gain: f64,
}

/// Test-accuracy deltas of each variant against `baseline`.
pub fn gain_table(baseline: &MultiSeedReport, variants: &[MultiSeedReport]) -> Vec<GainRow> {
    variants
        .iter()
        .map(|v| GainRow {
            source_domain: v.source_domain.clone(),
            transfer: v.transfer,
            model: v.model.clone(),
            experiment: v.experiment.clone(),
            baseline: baseline.experiment.clone(),
            mean_accuracy: v.test_accuracy.mean,
            baseline_accuracy: baseline.test_accuracy.mean,
            gain: v.test_accuracy.mean - baseline.test_accuracy.mean,
        })
        .collect()
}

pub fn render_gains_csv(rows: &[GainRow]) -> String {
    let mut out = String::from("source_domain,transfer,model,experiment,baseline,mean_accuracy,baseline_accuracy,gain\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:+.6}\n",
            r.source_domain, r.transfer, r.model, r.experiment, r.baseline, r.mean_accuracy, r.baseline_accuracy, r.gain
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SynthDomain, SynthSpec};
    use crate::harness::config::DataSource;
    use crate::models::{Architecture, ModelSpec};

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec {
                architecture: Architecture::Bow,
                embedding_dim: 8,
                mlp: vec![16],
                trainable_embeddings: true,
                ..Default::default()
            },
            source: DataSource::Synthetic(SynthSpec {
                train: 60,
                dev: 15,
                test: 15,
                domain: SynthDomain::General,
                ..Default::default()
            }),
            target: Some(DataSource::Synthetic(SynthSpec {
                train: 60,
                dev: 15,
                test: 15,
                ..Default::default()
            })),
            seeds: vec![4],
            max_epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn multi_target_freezes_heads() {
        let cfg = small_cfg();
        let res = Resources::load(&cfg).unwrap();
        let mut spec = cfg.model.clone();
        spec.seed = 2;
        let mut model = NliModel::new(spec, res.vocab.clone(), None, &[SOURCE_HEAD, TARGET_HEAD]).unwrap();
        let plan = TransferPlan::new(&model.params, SOURCE_HEAD, TARGET_HEAD).unwrap();
        assert!(plan.shared.contains(&"embedding".to_string()));
        let before = model.params.clone();
        let opts = train_options(&cfg, 2);
        let mut adam = AdamState::new(opts.adam);
        let p1 = |n: &str| plan.in_phase_one(n);
        train_model(
            &mut model,
            &res.source.train.pairs,
            &res.source.dev.pairs,
            SOURCE_HEAD,
            None,
            &opts,
            &mut adam,
            &p1,
            "s",
        )
        .unwrap();
        for n in &plan.target_head {
            assert_eq!(model.params.get(n).unwrap(), before.get(n).unwrap());
        }
        assert_ne!(model.params.get(&plan.source_head[0]).unwrap(), before.get(&plan.source_head[0]).unwrap());
        let mid = model.params.clone();
        let mut adam = AdamState::new(opts.adam);
        let p2 = |n: &str| plan.in_phase_two(n);
        let t = res.target.as_ref().unwrap();
        train_model(&mut model, &t.train.pairs, &t.dev.pairs, TARGET_HEAD, None, &opts, &mut adam, &p2, "t").unwrap();
        for n in &plan.source_head {
            assert_eq!(model.params.get(n).unwrap(), mid.get(n).unwrap());
        }
    }

    #[test]
    fn multi_target_requires_plan() {
        let cfg = small_cfg();
        let res = Resources::load(&cfg).unwrap();
        let mut model = NliModel::new(cfg.model.clone(), res.vocab.clone(), None, &[SOURCE_HEAD, TARGET_HEAD]).unwrap();
        let opts = train_options(&cfg, 1);
        let err = transfer_run(TransferMode::MultiTarget, &mut model, &res.source, res.target.as_ref(), None, &opts, false, None);
        assert!(err.is_err());
    }

    #[test]
    fn plan_rejects_stray_heads() {
        let cfg = small_cfg();
        let res = Resources::load(&cfg).unwrap();
        let model = NliModel::new(cfg.model.clone(), res.vocab.clone(), None, &[SOURCE_HEAD, TARGET_HEAD, "extra"]).unwrap();
        assert!(TransferPlan::new(&model.params, SOURCE_HEAD, TARGET_HEAD).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_saved() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            transfer: TransferMode::Sequential,
            ..small_cfg()
        };
        let a = run_experiment(&cfg, Some(dir.path())).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.runs[0].phases.len(), 2);
        let run_dir = dir.path().join("experiment").join("4");
        let model = NliModel::load(&run_dir.join(CHECKPOINT_FILE), &run_dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(model.spec.seed, 4);
        assert!(dir.path().join("experiment").join(REPORT_FILE).exists());
    }

    #[test]
    fn gbm_learner_runs() {
        let cfg = ExperimentConfig {
            learner: Learner::Gbm,
            target: None,
            gbm: crate::models::GbmConfig {
                rounds: 10,
                ..Default::default()
            },
            ..small_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg, Some(dir.path())).unwrap();
        assert_eq!(report.model, "gbm");
        let bundle = GbmBundle::load(&dir.path().join("experiment/4").join(GBM_FILE)).unwrap();
        assert_eq!(bundle.model.rounds.len(), 10);
    }

    #[test]
    fn gains_are_mean_differences() {
        let cfg = small_cfg();
        let res = Resources::load(&cfg).unwrap();
        let (mut r, _) = run_seed(&cfg, &res, 1).unwrap();
        let mut runs = Vec::new();
        for (i, acc) in [0.5, 0.6, 0.7].iter().enumerate() {
            r.seed = i as u64;
            r.test.accuracy = *acc;
            runs.push(r.clone());
        }
        let variant = MultiSeedReport::from_runs(runs.clone()).unwrap();
        let mut base_runs = runs;
        base_runs.iter_mut().for_each(|r| r.test.accuracy = 0.4);
        let base = MultiSeedReport::from_runs(base_runs).unwrap();
        let rows = gain_table(&base, &[variant]);
        assert!((rows[0].gain - 0.2).abs() < 1e-12);
        assert!(render_gains_csv(&rows).lines().nth(1).unwrap().ends_with("+0.200000"));
    }

    #[test]
    fn hypothesis_only_keeps_labels() {
        let data = small_cfg().source.load(1).unwrap();
        let h = hypothesis_only(&data);
        assert!(h.train.pairs.iter().all(|p| p.premise == [EMPTY_PREMISE_TOKEN]));
        assert_eq!(h.train.pairs[0].label, data.train.pairs[0].label);
    }
}
