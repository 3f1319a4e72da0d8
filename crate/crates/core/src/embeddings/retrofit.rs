use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::EmbeddingMatrix;
use crate::error::{read_to_string, Error, Result};

/// Undirected token graph without self loops.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdjacencyLine {
    token: String,
    neighbors: Vec<String>,
}

impl Adjacency {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        self.neighbors.entry(a.to_string()).or_default().insert(b.to_string());
        self.neighbors.entry(b.to_string()).or_default().insert(a.to_string());
    }

    pub fn neighbors(&self, token: &str) -> impl Iterator<Item = &str> {
        self.neighbors.get(token).into_iter().flatten().map(String::as_str)
    }

    pub fn degree(&self, token: &str) -> usize {
        self.neighbors.get(token).map_or(0, BTreeSet::len)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.neighbors.keys().map(String::as_str)
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.neighbors
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (a.as_str(), b.as_str())))
    }

    pub fn num_edges(&self) -> usize {
        self.edges().count()
    }

    /// Keeps only edges whose endpoints both satisfy `keep`.
    pub fn restricted(&self, keep: impl Fn(&str) -> bool) -> Adjacency {
        let mut out = Adjacency::new();
        for (a, b) in self.edges() {
            if keep(a) && keep(b) {
                out.add_edge(a, b);
            }
        }
        out
    }

    /// JSON lines `{"token": .., "neighbors": [..]}`; edges are symmetrized.
    pub fn from_jsonl(text: &str, source: &str) -> Result<Self> {
        let mut adj = Adjacency::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: AdjacencyLine = serde_json::from_str(line).map_err(|e| Error::parse(source, i + 1, e.to_string()))?;
            for n in &rec.neighbors {
                adj.add_edge(&rec.token, n);
            }
        }
        Ok(adj)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (token, ns) in &self.neighbors {
            let line = AdjacencyLine {
                token: token.clone(),
                neighbors: ns.iter().cloned().collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// The same weight on every edge.
    Uniform(f64),
    /// `(1/|N(i)| + 1/|N(j)|) / 2` on edge `{i, j}`.
    InverseDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrofitConfig {
    pub alpha: f64,
    pub beta: BetaRule,
    pub iterations: usize,
}

impl Default for RetrofitConfig {
    fn default() -> Self {
        RetrofitConfig {
            alpha: 1.0,
            beta: BetaRule::InverseDegree,
            iterations: 10,
        }
    }
}

impl RetrofitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config {
                key: "alpha".into(),
                message: "must be positive".into(),
            });
        }
        if let BetaRule::Uniform(b) = self.beta {
            if !(b >= 0.0) {
                return Err(Error::Config {
                    key: "beta".into(),
                    message: "must be non-negative".into(),
                });
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config {
                key: "iterations".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn weight(&self, adj: &Adjacency, a: &str, b: &str) -> f64 {
        match self.beta {
            BetaRule::Uniform(b) => b,
            BetaRule::InverseDegree => 0.5 * (1.0 / adj.degree(a) as f64 + 1.0 / adj.degree(b) as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrofitOutput {
    pub matrix: EmbeddingMatrix,
    /// Objective before the first sweep, then after each sweep.
    pub objective: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σ_i α‖q_i − q̂_i‖² + Σ_{i,j} β_ij ‖q_i − q_j‖²`, each undirected edge
/// counted once. Edges touching tokens outside the matrix are ignored.
pub fn retrofit_objective(
    matrix: &EmbeddingMatrix,
    original: &EmbeddingMatrix,
    adjacency: &Adjacency,
    config: &RetrofitConfig,
) -> f64 {
    let adj = adjacency.restricted(|t| matrix.contains(t));
    let mut total = 0.0;
    for (i, t) in matrix.tokens().iter().enumerate() {
        if let Some(orig) = original.get(t) {
            total += config.alpha * sq_dist(matrix.row(i), orig);
        }
    }
    for (a, b) in adj.edges() {
        let w = config.weight(&adj, a, b);
        total += w * sq_dist(matrix.get(a).expect("restricted"), matrix.get(b).expect("restricted"));
    }
    total
}

/// In-place sweeps over the tokens of the adjacency in lexicographic order,
/// setting each to the exact minimizer of the objective given its
/// neighbors. Tokens without neighbors are never written.
pub fn retrofit(matrix: &EmbeddingMatrix, adjacency: &Adjacency, config: &RetrofitConfig) -> Result<RetrofitOutput> {
    config.validate()?;
    let adj = adjacency.restricted(|t| matrix.contains(t));
    let original = matrix.clone();
    let mut out = matrix.clone();
    out.provenance = format!("{}+retrofit", matrix.provenance);
    let d = matrix.dim();
    let order: Vec<(usize, Vec<(usize, f64)>)> = adj
        .tokens()
        .map(|t| {
            let ns = adj
                .neighbors(t)
                .map(|n| (matrix.position(n).expect("restricted"), config.weight(&adj, t, n)))
                .collect();
            (matrix.position(t).expect("restricted"), ns)
        })
        .collect();

    let mut objective = vec![retrofit_objective(&out, &original, &adj, config)];
    for _ in 0..config.iterations {
        for (i, ns) in &order {
            let mut acc: Vec<f64> = original.row(*i).iter().map(|v| config.alpha * v).collect();
            let mut denom = config.alpha;
            for &(j, w) in ns {
                for (a, q) in acc.iter_mut().zip(out.row(j)) {
                    *a += w * q;
                }
                denom += w;
            }
            let row = out.row_mut(*i);
            for k in 0..d {
                row[k] = acc[k] / denom;
            }
        }
        objective.push(retrofit_objective(&out, &original, &adj, config));
    }
    Ok(RetrofitOutput { matrix: out, objective })
}
