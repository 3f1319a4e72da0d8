use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, Label};
use crate::error::{Error, Result};

pub const DEFAULT_HISTOGRAM_EDGES: &[usize] = &[0, 5, 10, 15, 20, 25, 30, 40, 50, 75, 100, 150, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lo: usize,
    /// Exclusive upper edge; `None` for the open last bucket.
    pub hi: Option<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub histogram: Vec<HistogramBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub name: String,
    pub pairs: usize,
    pub labels: BTreeMap<String, usize>,
    pub premise: LengthStats,
    pub hypothesis: LengthStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub histogram_edges: Vec<usize>,
    pub splits: Vec<SplitStats>,
}

fn length_stats(lengths: &[usize], edges: &[usize]) -> LengthStats {
    let mut histogram: Vec<HistogramBucket> = edges
        .iter()
        .enumerate()
        .map(|(i, &lo)| HistogramBucket {
            lo,
            hi: edges.get(i + 1).copied(),
            count: 0,
        })
        .collect();
    for &len in lengths {
        // lengths below the first edge land in the first bucket
        let idx = edges.iter().rposition(|&e| e <= len).unwrap_or(0);
        histogram[idx].count += 1;
    }
    let mean = if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    };
    LengthStats {
        mean,
        min: lengths.iter().copied().min().unwrap_or(0),
        max: lengths.iter().copied().max().unwrap_or(0),
        histogram,
    }
}

/// Pair counts, label counts and token-length statistics per split.
/// `edges` must be strictly increasing; bucket `i` covers
/// `[edges[i], edges[i+1])` and the last bucket is open-ended.
pub fn dataset_stats(splits: &[&DatasetSplit], edges: &[usize]) -> Result<DatasetStats> {
    if splits.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("dataset statistics need at least one pair"));
    }
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("histogram edges must be non-empty and strictly increasing"));
    }
    let splits = splits
        .iter()
        .map(|s| {
            let prem: Vec<usize> = s.pairs.iter().map(|p| p.premise.len()).collect();
            let hyp: Vec<usize> = s.pairs.iter().map(|p| p.hypothesis.len()).collect();
            let mut labels: BTreeMap<String, usize> = Label::ALL.iter().map(|l| (l.to_string(), 0)).collect();
            for p in &s.pairs {
                *labels.get_mut(p.label.as_str()).expect("all labels present") += 1;
            }
            SplitStats {
                name: s.name.to_string(),
                pairs: s.len(),
                labels,
                premise: length_stats(&prem, edges),
                hypothesis: length_stats(&hyp, edges),
            }
        })
        .collect();
    Ok(DatasetStats {
        histogram_edges: edges.to_vec(),
        splits,
    })
}
