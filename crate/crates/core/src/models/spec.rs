use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Bow,
    InferSent,
    Esim,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Bow => "bow",
            Architecture::InferSent => "infersent",
            Architecture::Esim => "esim",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub kb_attention: bool,
    /// Decay of the graph-distance attention weights.
    pub kb_lambda: f64,
    pub embedding_dim: usize,
    pub hidden: usize,
    /// Hidden layer widths of the classifier; the 3-way output layer is implicit.
    pub mlp: Vec<usize>,
    pub trainable_embeddings: bool,
    /// Dropout on classifier hidden layers during training.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            architecture: Architecture::InferSent,
            kb_attention: false,
            kb_lambda: 1.0,
            embedding_dim: 50,
            hidden: 64,
            mlp: vec![128],
            trainable_embeddings: false,
            dropout: 0.0,
            seed: 1,
        }
    }
}

impl ModelSpec {
    pub const OUTPUTS: usize = Label::COUNT;

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: format!("model.{key}"),
                message: message.into(),
            })
        };
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim", "must be at least 1");
        }
        if self.mlp.contains(&0) {
            return bad("mlp", "layer widths must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must be in [0, 1)");
        }
        if self.kb_attention && self.architecture == Architecture::Bow {
            return bad("kb_attention", "knowledge-directed attention needs infersent or esim");
        }
        if self.kb_attention && !(self.kb_lambda > 0.0) {
            return bad("kb_lambda", "must be positive");
        }
        Ok(())
    }

    /// Width of the vector fed to the classifier.
    pub fn classifier_input(&self) -> usize {
        match self.architecture {
            Architecture::Bow => 2 * self.embedding_dim,
            Architecture::InferSent | Architecture::Esim => 8 * self.hidden,
        }
    }

    /// Short name such as `esim+kb`.
    pub fn name(&self) -> String {
        if self.kb_attention {
            format!("{}+kb", self.architecture)
        } else {
            self.architecture.to_string()
        }
    }
}

/// Class distribution in canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; 3],
}

impl Prediction {
    /// Softmax of raw scores.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut probs = [0.0; 3];
        for (p, e) in probs.iter_mut().zip(&exps) {
            *p = e / total;
        }
        Prediction { probs }
    }

    /// Most probable label; ties resolve to the lowest index.
    pub fn label(&self) -> Label {
        let mut best = 0;
        for i in 1..3 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Label::from_index(best).expect("three classes")
    }
}
