use super::graph::ConceptGraph;
use super::matching::coverage;
use crate::autodiff::Tensor;
use crate::embeddings::Adjacency;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Graph-distance attention between two sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct KbAttention {
    /// `[n, m]`, premise position → hypothesis position.
    pub premise_to_hypothesis: Tensor,
    /// `[m, n]`, hypothesis position → premise position.
    pub hypothesis_to_premise: Tensor,
    pub lambda: f64,
}

impl KbAttention {
    pub fn premise_rows_with_mass(&self) -> Vec<bool> {
        rows_with_mass(&self.premise_to_hypothesis)
    }

    pub fn hypothesis_rows_with_mass(&self) -> Vec<bool> {
        rows_with_mass(&self.hypothesis_to_premise)
    }
}

fn rows_with_mass(t: &Tensor) -> Vec<bool> {
    let cols = t.shape()[1];
    if cols == 0 {
        return vec![false; t.shape()[0]];
    }
    t.data().chunks(cols).map(|r| r.iter().any(|&w| w > 0.0)).collect()
}

/// Raw scores `exp(-λ·l)` between covered positions, 0 elsewhere.
fn raw_scores(pcov: &[Option<usize>], hcov: &[Option<usize>], graph: &ConceptGraph, lambda: f64) -> Vec<f64> {
    let (n, m) = (pcov.len(), hcov.len());
    let mut s = vec![0.0; n * m];
    let mut cache: Vec<Option<Vec<Option<usize>>>> = vec![None; graph.len()];
    for (i, pc) in pcov.iter().enumerate() {
        let Some(pc) = *pc else { continue };
        let dist = cache[pc].get_or_insert_with(|| graph.distances_from(pc));
        for (j, hc) in hcov.iter().enumerate() {
            if let Some(d) = hc.and_then(|hc| dist[hc]) {
                s[i * m + j] = (-lambda * d as f64).exp();
            }
        }
    }
    s
}

fn normalize_rows(data: &mut [f64], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in data.chunks_mut(cols) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|w| *w /= total);
        }
    }
}

fn transpose(data: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            t[j * n + i] = data[i * m + j];
        }
    }
    t
}

/// Row-normalized `exp(-λ·l_ij)` weights in both directions, where `l_ij`
/// is the graph distance between the concepts covering positions `i` and
/// `j`. Uncovered positions and unreachable pairs get weight 0.
pub fn kb_attention(premise: &[String], hypothesis: &[String], graph: &ConceptGraph, lambda: f64) -> Result<KbAttention> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("kb attention decay must be positive, got {lambda}")));
    }
    let (n, m) = (premise.len(), hypothesis.len());
    let raw = raw_scores(&coverage(premise, graph), &coverage(hypothesis, graph), graph, lambda);
    let mut p2h = raw.clone();
    normalize_rows(&mut p2h, m);
    let mut h2p = transpose(&raw, n, m);
    normalize_rows(&mut h2p, n);
    Ok(KbAttention {
        premise_to_hypothesis: Tensor::new(vec![n, m], p2h)?,
        hypothesis_to_premise: Tensor::new(vec![m, n], h2p)?,
        lambda,
    })
}

/// Padded batch version: returns `[B, Tp, Th]` and `[B, Th, Tp]` weights
/// with zeros at padding positions.
pub fn kb_attention_batch(
    premises: &[Vec<String>],
    hypotheses: &[Vec<String>],
    tp: usize,
    th: usize,
    graph: &ConceptGraph,
    lambda: f64,
) -> Result<(Tensor, Tensor)> {
    let b = premises.len();
    if hypotheses.len() != b {
        return Err(Error::Shape {
            op: "kb_attention_batch",
            shapes: vec![vec![b], vec![hypotheses.len()]],
        });
    }
    let mut p2h = vec![0.0; b * tp * th];
    let mut h2p = vec![0.0; b * th * tp];
    for k in 0..b {
        let (p, h) = (&premises[k], &hypotheses[k]);
        if p.len() > tp || h.len() > th {
            return Err(Error::Shape {
                op: "kb_attention_batch",
                shapes: vec![vec![tp, th], vec![p.len(), h.len()]],
            });
        }
        let att = kb_attention(p, h, graph, lambda)?;
        for i in 0..p.len() {
            for j in 0..h.len() {
                p2h[k * tp * th + i * th + j] = att.premise_to_hypothesis.data()[i * h.len() + j];
                h2p[k * th * tp + j * tp + i] = att.hypothesis_to_premise.data()[j * p.len() + i];
            }
        }
    }
    Ok((Tensor::new(vec![b, tp, th], p2h)?, Tensor::new(vec![b, th, tp], h2p)?))
}

/// `ã_i = Σ_j w_ij · b_j` for `[n, m]` weights and `[m, d]` vectors.
pub fn kb_attend(weights: &Tensor, other: &Tensor) -> Result<Tensor> {
    if weights.rank() != 2 || other.rank() != 2 || weights.shape()[1] != other.shape()[0] {
        return Err(Error::Shape {
            op: "kb_attend",
            shapes: vec![weights.shape().to_vec(), other.shape().to_vec()],
        });
    }
    let (n, m, d) = (weights.shape()[0], weights.shape()[1], other.shape()[1]);
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..m {
            let w = weights.data()[i * m + j];
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                out[i * d + k] += w * other.data()[j * d + k];
            }
        }
    }
    Tensor::new(vec![n, d], out)
}

/// Token graph for retrofitting: the head (last) token of every surface
/// form is linked to the head tokens of the same concept's other forms and
/// of every concept it has an edge to.
pub fn lexical_adjacency(graph: &ConceptGraph) -> Adjacency {
    let heads = |idx: usize| -> Vec<String> { graph.surface_forms(idx).into_iter().filter_map(|f| f.last().cloned()).collect() };
    let mut adj = Adjacency::new();
    for i in 0..graph.len() {
        let own = heads(i);
        for a in &own {
            for b in &own {
                adj.add_edge(a, b);
            }
        }
        for &j in graph.neighbors(i) {
            if j < i {
                continue;
            }
            for a in &own {
                for b in heads(j) {
                    adj.add_edge(a, &b);
                }
            }
        }
    }
    adj
}
