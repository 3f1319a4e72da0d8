use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::models::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    /// 0 when the class is never predicted.
    pub precision: f64,
    /// 0 when the class has no gold examples.
    pub recall: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: u64,
    pub accuracy: f64,
    /// `confusion[gold][predicted]` in label order.
    pub confusion: [[u64; 3]; 3],
    pub per_class: Vec<ClassMetrics>,
}

pub fn evaluate_predictions(gold: &[Label], predicted: &[Label]) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    if gold.len() != predicted.len() {
        return Err(Error::invalid(format!("{} gold labels but {} predictions", gold.len(), predicted.len())));
    }
    let mut confusion = [[0u64; 3]; 3];
    for (g, p) in gold.iter().zip(predicted) {
        confusion[g.index()][p.index()] += 1;
    }
    let n = gold.len() as u64;
    let correct: u64 = (0..3).map(|k| confusion[k][k]).sum();
    let per_class = Label::ALL
        .iter()
        .map(|&label| {
            let k = label.index();
            let support: u64 = confusion[k].iter().sum();
            let predicted: u64 = (0..3).map(|g| confusion[g][k]).sum();
            let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            ClassMetrics {
                label,
                precision: ratio(confusion[k][k], predicted),
                recall: ratio(confusion[k][k], support),
                support,
            }
        })
        .collect();
    Ok(Metrics {
        n,
        accuracy: correct as f64 / n as f64,
        confusion,
        per_class,
    })
}

/// Sums class distributions and renormalizes; a single input is returned
/// unchanged. The argmax breaks ties toward the lowest label index.
pub fn ensemble_predict(predictions: &[Prediction]) -> Result<Prediction> {
    if predictions.is_empty() {
        return Err(Error::invalid("ensemble needs at least one prediction"));
    }
    if let [only] = predictions {
        return Ok(*only);
    }
    let mut sum = [0.0; 3];
    for p in predictions {
        for k in 0..3 {
            sum[k] += p.probs[k];
        }
    }
    let total: f64 = sum.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NonFinite {
            what: "ensemble probability mass".into(),
        });
    }
    Ok(Prediction {
        probs: sum.map(|s| s / total),
    })
}

/// Patience-based stopping on validation loss. Only a strict decrease of
/// the best value so far counts as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epochs: usize,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience: patience.max(1),
            best: None,
            best_epoch: 0,
            epochs: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        self.epochs += 1;
        let improved = self.best.map_or(true, |b| val_loss < b);
        if improved {
            self.best = Some(val_loss);
            self.best_epoch = self.epochs;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best >= self.patience,
        }
    }

    /// 1-based epoch of the best loss; 0 before any observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best
    }
}

/// Replays a loss sequence: `(best_epoch, epochs_run)`, both 1-based.
pub fn early_stop_schedule(val_losses: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut es = EarlyStopping::new(patience);
    let mut run = 0;
    for &l in val_losses.iter().take(max_epochs) {
        run += 1;
        if es.observe(l).stop {
            break;
        }
    }
    (es.best_epoch(), run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("summary of no values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Summary {
            mean,
            std,
            values: values.to_vec(),
        })
    }
}
