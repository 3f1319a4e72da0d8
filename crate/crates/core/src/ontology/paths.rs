use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::graph::ConceptGraph;
use super::matching::match_indices;
use crate::data::NliPair;

/// Longest path length kept distinct in histograms and features; longer
/// paths fall into the last bucket.
pub const PATH_CAP: usize = 8;
/// Feature value standing for "no path".
pub const NO_PATH_SENTINEL: f64 = (PATH_CAP + 1) as f64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathHistogram {
    /// `counts[l]` pairs with minimum path `l`; `counts[PATH_CAP]` holds `l >= PATH_CAP`.
    pub counts: Vec<usize>,
    /// Pairs without concepts on one side or without any connecting path.
    pub no_path: usize,
}

impl PathHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.no_path
    }
}

/// Minimum distance over all premise × hypothesis concept combinations.
pub fn min_cross_distance(premise: &[usize], hypothesis: &[usize], graph: &ConceptGraph) -> Option<usize> {
    premise
        .iter()
        .filter_map(|&p| {
            let d = graph.distances_from(p);
            hypothesis.iter().filter_map(|&h| d[h]).min()
        })
        .min()
}

fn concept_set(tokens: &[String], graph: &ConceptGraph) -> Vec<usize> {
    let set: BTreeSet<usize> = match_indices(tokens, graph).into_iter().map(|m| m.2).collect();
    set.into_iter().collect()
}

pub fn path_histogram<'a>(pairs: impl IntoIterator<Item = &'a NliPair>, graph: &ConceptGraph) -> PathHistogram {
    let mut hist = PathHistogram {
        counts: vec![0; PATH_CAP + 1],
        no_path: 0,
    };
    for p in pairs {
        let pc = concept_set(&p.premise, graph);
        let hc = concept_set(&p.hypothesis, graph);
        match min_cross_distance(&pc, &hc, graph) {
            Some(d) => hist.counts[d.min(PATH_CAP)] += 1,
            None => hist.no_path += 1,
        }
    }
    hist
}

pub const PAIR_FEATURE_NAMES: [&str; 10] = [
    "kb_premise_concepts",
    "kb_hypothesis_concepts",
    "kb_shared_concepts",
    "kb_min_path",
    "kb_max_path",
    "kb_mean_path",
    "kb_hypothesis_reachable_frac",
    "kb_premise_reachable_frac",
    "kb_pairs_within_one",
    "kb_pairs_unreachable",
];

/// Ten graph features of a sentence pair, in [`PAIR_FEATURE_NAMES`] order.
///
/// Counts are over distinct concepts. Path statistics range over every
/// premise × hypothesis concept combination, with lengths clamped to
/// [`PATH_CAP`] and unreachable combinations scored [`NO_PATH_SENTINEL`];
/// with no combinations at all they are the sentinel.
pub fn ontology_pair_features(premise: &[usize], hypothesis: &[usize], graph: &ConceptGraph) -> [f64; 10] {
    let p: Vec<usize> = premise.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let h: Vec<usize> = hypothesis.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let shared = p.iter().filter(|c| h.contains(c)).count();

    let mut lengths = Vec::with_capacity(p.len() * h.len());
    let mut h_reached = vec![false; h.len()];
    let mut p_reached = vec![false; p.len()];
    let (mut within_one, mut unreachable) = (0usize, 0usize);
    for (i, &pc) in p.iter().enumerate() {
        let dist = graph.distances_from(pc);
        for (j, &hc) in h.iter().enumerate() {
            match dist[hc] {
                Some(d) => {
                    lengths.push(d.min(PATH_CAP) as f64);
                    h_reached[j] = true;
                    p_reached[i] = true;
                    if d <= 1 {
                        within_one += 1;
                    }
                }
                None => {
                    lengths.push(NO_PATH_SENTINEL);
                    unreachable += 1;
                }
            }
        }
    }
    let (min, max, mean) = if lengths.is_empty() {
        (NO_PATH_SENTINEL, NO_PATH_SENTINEL, NO_PATH_SENTINEL)
    } else {
        (
            lengths.iter().copied().fold(f64::INFINITY, f64::min),
            lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            lengths.iter().sum::<f64>() / lengths.len() as f64,
        )
    };
    let frac = |v: &[bool]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&b| b).count() as f64 / v.len() as f64
        }
    };
    [
        p.len() as f64,
        h.len() as f64,
        shared as f64,
        min,
        max,
        mean,
        frac(&h_reached),
        frac(&p_reached),
        within_one as f64,
        unreachable as f64,
    ]
}

/// Tags both sentences and computes [`ontology_pair_features`].
pub fn pair_features_from_tokens(premise: &[String], hypothesis: &[String], graph: &ConceptGraph) -> [f64; 10] {
    ontology_pair_features(&concept_set(premise, graph), &concept_set(hypothesis, graph), graph)
}
