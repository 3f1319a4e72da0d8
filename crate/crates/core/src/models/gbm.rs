use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{feature_manifest_hash, NUM_FEATURES};
use super::spec::Prediction;
use crate::data::Label;
use crate::error::{read_to_string, write_file, Error, Result};

const K: usize = Label::COUNT;
/// Floor on class priors so absent classes keep a finite score.
const PRIOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmConfig {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            max_depth: 3,
            rounds: 100,
            learning_rate: 0.1,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree stored as a node arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

/// Multiclass gradient-boosted trees: one tree per class per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub config: GbmConfig,
    pub num_features: usize,
    /// Log class priors, the initial scores.
    pub init: [f64; K],
    /// `rounds[r][k]` is the class-`k` tree of round `r`.
    pub rounds: Vec<Vec<Tree>>,
    /// Training log-loss before any round, then after each round.
    pub train_loss: Vec<f64>,
    pub seed: u64,
    /// Hash of the feature manifest the model was trained against.
    pub feature_manifest: String,
}

fn softmax(scores: &[f64; K]) -> [f64; K] {
    Prediction::from_logits(scores).probs
}

fn log_loss(scores: &[[f64; K]], labels: &[usize]) -> f64 {
    scores.iter().zip(labels).map(|(s, &y)| -softmax(s)[y].max(1e-300).ln()).sum::<f64>() / labels.len() as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    residual: &'a [f64],
    config: &'a GbmConfig,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    /// Newton leaf value for the softmax loss.
    fn leaf(&self, idx: &[usize]) -> f64 {
        let num: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let den: f64 = idx.iter().map(|&i| self.residual[i].abs() * (1.0 - self.residual[i].abs())).sum();
        if den < 1e-12 {
            0.0
        } else {
            (K as f64 - 1.0) / K as f64 * num / den
        }
    }

    /// Best squared-error split: (gain, feature, threshold). Ties keep the
    /// lowest feature and threshold.
    fn best_split(&self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let base = total * total / n;
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x[0].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = 0.0;
            for (pos, w) in order.windows(2).enumerate() {
                left += self.residual[w[0]];
                let nl = pos + 1;
                let (va, vb) = (self.x[w[0]][f], self.x[w[1]][f]);
                if va == vb || nl < min_leaf || order.len() - nl < min_leaf {
                    continue;
                }
                let nr = order.len() - nl;
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, f, va + (vb - va) / 2.0));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let split = if depth < self.config.max_depth && idx.len() >= 2 {
            self.best_split(&idx)
        } else {
            None
        };
        match split {
            None => self.nodes[me] = TreeNode::Leaf { value: self.leaf(&idx) },
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[me] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        me
    }
}

/// Trains on rows of equal width. Fails unless at least two classes appear.
pub fn gbm_train(features: &[Vec<f64>], labels: &[Label], config: &GbmConfig, seed: u64) -> Result<GbmModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid(format!(
            "gbm_train needs matching non-empty inputs, got {} rows and {} labels",
            features.len(),
            labels.len()
        )));
    }
    let width = features[0].len();
    if width == 0 || features.iter().any(|r| r.len() != width || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("feature rows must share a non-zero width and be finite"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Config {
            key: "gbm.learning_rate".into(),
            message: "must be positive".into(),
        });
    }
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut counts = [0usize; K];
    y.iter().for_each(|&c| counts[c] += 1);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::invalid("gradient boosting needs at least two classes in the training labels"));
    }
    let n = y.len() as f64;
    let mut init = [0.0; K];
    for k in 0..K {
        init[k] = (counts[k] as f64 / n).max(PRIOR_FLOOR).ln();
    }

    let mut scores = vec![init; y.len()];
    let mut model = GbmModel {
        config: config.clone(),
        num_features: width,
        init,
        rounds: Vec::with_capacity(config.rounds),
        train_loss: vec![log_loss(&scores, &y)],
        seed,
        feature_manifest: if width == NUM_FEATURES {
            feature_manifest_hash()
        } else {
            String::new()
        },
    };
    let all: Vec<usize> = (0..y.len()).collect();
    for _ in 0..config.rounds {
        let probs: Vec<[f64; K]> = scores.iter().map(softmax).collect();
        let mut trees = Vec::with_capacity(K);
        for k in 0..K {
            let residual: Vec<f64> = probs.iter().zip(&y).map(|(p, &c)| f64::from(u8::from(c == k)) - p[k]).collect();
            let mut g = Grower {
                x: features,
                residual: &residual,
                config,
                nodes: Vec::new(),
            };
            g.grow(all.clone(), 0);
            trees.push(Tree { nodes: g.nodes });
        }
        for (row, s) in features.iter().zip(scores.iter_mut()) {
            for (k, t) in trees.iter().enumerate() {
                s[k] += config.learning_rate * t.eval(row);
            }
        }
        model.rounds.push(trees);
        model.train_loss.push(log_loss(&scores, &y));
    }
    Ok(model)
}

impl GbmModel {
    /// Structural checks: one tree per class per round, indices in range.
    pub fn validate(&self) -> Result<()> {
        for trees in &self.rounds {
            if trees.len() != K {
                return Err(Error::invalid("each boosting round needs one tree per class"));
            }
            for t in trees {
                if t.nodes.is_empty() || t.max_feature().is_some_and(|f| f >= self.num_features) {
                    return Err(Error::invalid("tree references a feature outside the model width"));
                }
                for node in &t.nodes {
                    if let TreeNode::Split { left, right, .. } = node {
                        if *left >= t.nodes.len() || *right >= t.nodes.len() {
                            return Err(Error::invalid("tree child index out of range"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: GbmModel = serde_json::from_str(&read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Class distribution for one row; its width must match the model.
pub fn gbm_predict(model: &GbmModel, features: &[f64]) -> Result<Prediction> {
    if features.len() != model.num_features {
        return Err(Error::Shape {
            op: "gbm_predict",
            shapes: vec![vec![features.len()], vec![model.num_features]],
        });
    }
    let mut scores = model.init;
    for trees in &model.rounds {
        for (k, t) in trees.iter().enumerate() {
            scores[k] += model.config.learning_rate * t.eval(features);
        }
    }
    Ok(Prediction { probs: softmax(&scores) })
}
