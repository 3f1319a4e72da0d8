use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_predictions, EarlyStopping, Metrics};
use crate::autodiff::{AdamConfig, AdamState, ParamStore, Tape};
use crate::data::{batchify, Batch, Label, NliPair};
use crate::error::{Error, Result};
use crate::models::neural::EMBEDDING_PARAM;
use crate::models::{ForwardContext, NliModel, Prediction};
use crate::ontology::ConceptGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds batch shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 50,
            patience: 5,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 1,
        }
    }
}

/// Losses of one training phase; epochs are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistory {
    pub phase: String,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn mix(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_add(0x632b_e59b_d9b4_e019).rotate_left(17)
}

/// One pass over `batches`; returns the mean per-pair training loss.
pub fn train_epoch(
    model: &mut NliModel,
    batches: &[Batch],
    ctx: &ForwardContext,
    adam: &mut AdamState,
    trainable: &dyn Fn(&str) -> bool,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, batch) in batches.iter().enumerate() {
        let tape = Tape::new();
        let step_ctx = ForwardContext {
            dropout_seed: ctx.dropout_seed.map(|s| mix(s, i as u64)),
            ..*ctx
        };
        let out = model.forward(&tape, batch, &step_ctx)?;
        let loss = tape.cross_entropy(out.logits, &batch.labels)?;
        let value = tape.value(loss)?.data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: format!("training loss of batch {i} (head `{}`, {} pairs)", ctx.head, batch.len()),
            });
        }
        tape.backward(loss)?;
        let grads = tape.param_grads()?;
        let embeddings_trainable = model.spec.trainable_embeddings;
        let allowed = |name: &str| (name != EMBEDDING_PARAM || embeddings_trainable) && trainable(name);
        adam.step(&mut model.params, &grads, allowed)?;
        total += value * batch.len() as f64;
        count += batch.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean cross-entropy over `pairs` in inference mode.
pub fn dataset_loss(
    model: &NliModel,
    pairs: &[NliPair],
    head: &str,
    graph: Option<&ConceptGraph>,
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("loss over an empty split"));
    }
    let mut total = 0.0;
    for batch in batchify(pairs, batch_size, &model.vocab, None)? {
        let tape = Tape::new();
        let out = model.forward(&tape, &batch, &ForwardContext::eval(head, graph))?;
        let loss = tape.cross_entropy(out.logits, &batch.labels)?;
        total += tape.value(loss)?.data()[0] * batch.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

pub fn predict_pairs(
    model: &NliModel,
    pairs: &[NliPair],
    head: &str,
    graph: Option<&ConceptGraph>,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(pairs.len());
    for batch in batchify(pairs, batch_size, &model.vocab, None)? {
        out.extend(model.predict(&batch, head, graph)?);
    }
    Ok(out)
}

pub fn evaluate_model(
    model: &NliModel,
    pairs: &[NliPair],
    head: &str,
    graph: Option<&ConceptGraph>,
    batch_size: usize,
) -> Result<Metrics> {
    let preds = predict_pairs(model, pairs, head, graph, batch_size)?;
    let gold: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    let predicted: Vec<Label> = preds.iter().map(Prediction::label).collect();
    evaluate_predictions(&gold, &predicted)
}

/// Trains `head` until the validation loss stops improving for `patience`
/// epochs, then restores the parameters of the best epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    model: &mut NliModel,
    train: &[NliPair],
    dev: &[NliPair],
    head: &str,
    graph: Option<&ConceptGraph>,
    opts: &TrainOptions,
    adam: &mut AdamState,
    trainable: &dyn Fn(&str) -> bool,
    phase: &str,
) -> Result<PhaseHistory> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid(format!("phase `{phase}` needs non-empty train and dev splits")));
    }
    let mut stopper = EarlyStopping::new(opts.patience);
    let mut best: Option<ParamStore> = None;
    let mut history = PhaseHistory {
        phase: phase.to_string(),
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    for epoch in 0..opts.max_epochs {
        let epoch_seed = mix(opts.seed, epoch as u64 + 1);
        let batches = batchify(train, opts.batch_size, &model.vocab, Some(epoch_seed))?;
        let ctx = ForwardContext {
            head,
            graph,
            dropout_seed: (model.spec.dropout > 0.0).then_some(epoch_seed),
        };
        let train_loss = train_epoch(model, &batches, &ctx, adam, trainable)?;
        let val_loss = dataset_loss(model, dev, head, graph, opts.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                what: format!("validation loss at epoch {} of phase `{phase}`", epoch + 1),
            });
        }
        history.train_losses.push(train_loss);
        history.val_losses.push(val_loss);
        let decision = stopper.observe(val_loss);
        if decision.improved {
            best = Some(model.params.clone());
        }
        if decision.stop {
            history.stopped_early = true;
            break;
        }
    }
    if let Some(params) = best {
        model.params = params;
    }
    history.best_epoch = stopper.best_epoch();
    Ok(history)
}
