use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, NliPair, SplitName};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Stand-in premise token used by hypothesis-only probes.
pub const EMPTY_PREMISE: usize = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const EMPTY_PREMISE_TOKEN: &str = "∅premise";

const RESERVED: [&str; 3] = [PAD_TOKEN, UNK_TOKEN, EMPTY_PREMISE_TOKEN];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from the reserved entries followed by `tokens`.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for t in tokens {
            if !all.contains(&t) {
                all.push(t);
            }
        }
        Vocabulary::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Counts tokens of every train split in `splits` and keeps those seen at
/// least `min_count` times, most frequent first, ties broken
/// lexicographically. Dev and test splits are ignored.
pub fn build_vocab(splits: &[&DatasetSplit], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for split in splits.iter().filter(|s| s.name == SplitName::Train) {
        for p in &split.pairs {
            for t in p.premise.iter().chain(&p.hypothesis) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string())))
}

/// Padded ids and 0/1 mask for one side of a batch.
#[derive(Debug, Clone)]
pub struct PaddedSeq {
    /// Row-major `[B,T]` token ids, [`PAD`] beyond each length.
    pub ids: Vec<usize>,
    /// `[B,T]`, 1.0 on real tokens.
    pub mask: Tensor,
    pub lengths: Vec<usize>,
    /// Surface tokens, kept for ontology matching of out-of-vocabulary words.
    pub tokens: Vec<Vec<String>>,
}

impl PaddedSeq {
    pub fn new(seqs: &[&[String]], vocab: &Vocabulary) -> Self {
        let b = seqs.len();
        let t = seqs.iter().map(|s| s.len()).max().unwrap_or(0).max(1);
        let mut ids = vec![PAD; b * t];
        let mut mask = vec![0.0; b * t];
        for (i, s) in seqs.iter().enumerate() {
            for (j, tok) in s.iter().enumerate() {
                ids[i * t + j] = vocab.id(tok);
                mask[i * t + j] = 1.0;
            }
        }
        PaddedSeq {
            ids,
            mask: Tensor::new(vec![b, t], mask).expect("sized above"),
            lengths: seqs.iter().map(|s| s.len()).collect(),
            tokens: seqs.iter().map(|s| s.to_vec()).collect(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.mask.shape()[0]
    }

    pub fn max_len(&self) -> usize {
        self.mask.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Positions of the batch members in the input slice.
    pub indices: Vec<usize>,
    pub premise: PaddedSeq,
    pub hypothesis: PaddedSeq,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(pairs: &[&NliPair], indices: Vec<usize>, vocab: &Vocabulary) -> Self {
        let prem: Vec<&[String]> = pairs.iter().map(|p| p.premise.as_slice()).collect();
        let hyp: Vec<&[String]> = pairs.iter().map(|p| p.hypothesis.as_slice()).collect();
        Batch {
            indices,
            premise: PaddedSeq::new(&prem, vocab),
            hypothesis: PaddedSeq::new(&hyp, vocab),
            labels: pairs.iter().map(|p| p.label.index()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Groups `pairs` into batches padded to the per-batch maximum length. With
/// a seed the pair order is shuffled first; without one it is preserved.
pub fn batchify(pairs: &[NliPair], batch_size: usize, vocab: &Vocabulary, seed: Option<u64>) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let members: Vec<&NliPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&members, chunk.to_vec(), vocab)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Label;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn pair(p: &str, h: &str) -> NliPair {
        NliPair::new("x", toks(p), toks(h), Label::Neutral).unwrap()
    }

    #[test]
    fn min_count_filters_and_reserves() {
        let train = DatasetSplit::new(SplitName::Train, vec![pair("a a b", "a")]);
        let dev = DatasetSplit::new(SplitName::Dev, vec![pair("zzz", "zzz")]);
        let v = build_vocab(&[&train, &dev], 2).unwrap();
        assert_eq!(v.tokens()[PAD], PAD_TOKEN);
        assert_eq!(v.tokens()[UNK], UNK_TOKEN);
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
        assert_eq!(v.len(), 4);

        let v1 = build_vocab(&[&train, &dev], 1).unwrap();
        assert!(v1.contains("a") && v1.contains("b"));
        assert_eq!(v1.id("zzz"), UNK);
    }

    #[test]
    fn ordering_is_frequency_then_lexicographic() {
        let train = DatasetSplit::new(SplitName::Train, vec![pair("c b b a", "c")]);
        let v = build_vocab(&[&train], 1).unwrap();
        assert_eq!(&v.tokens()[3..], ["b", "c", "a"]);
    }

    #[test]
    fn bijective_over_entries() {
        let train = DatasetSplit::new(SplitName::Train, vec![pair("x y z", "w")]);
        let v = build_vocab(&[&train], 1).unwrap();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i);
        }
    }

    #[test]
    fn pads_to_batch_max() {
        let pairs = vec![pair("a b c", "x"), pair("a b c d e", "x y")];
        let v = Vocabulary::from_tokens(["a", "b", "c", "d", "e", "x", "y"].map(String::from));
        let batches = batchify(&pairs, 2, &v, None).unwrap();
        assert_eq!(batches.len(), 1);
        let b = &batches[0];
        assert_eq!(b.premise.max_len(), 5);
        let sums: Vec<f64> = (0..2).map(|i| b.premise.mask.row(i).iter().sum()).collect();
        assert_eq!(sums, [3.0, 5.0]);
        assert_eq!(b.premise.ids[3], PAD);
    }

    #[test]
    fn batch_size_one_has_no_padding() {
        let pairs = vec![pair("a b c", "x"), pair("a", "x y")];
        let v = Vocabulary::from_tokens(Vec::new());
        for b in batchify(&pairs, 1, &v, Some(3)).unwrap() {
            assert!(b.premise.mask.data().iter().all(|&m| m == 1.0));
        }
    }

    #[test]
    fn seeded_order_is_deterministic() {
        let pairs: Vec<NliPair> = (0..20).map(|i| pair(&format!("t{i}"), "h")).collect();
        let v = Vocabulary::from_tokens(Vec::new());
        let a: Vec<Vec<usize>> = batchify(&pairs, 3, &v, Some(9)).unwrap().into_iter().map(|b| b.indices).collect();
        let b: Vec<Vec<usize>> = batchify(&pairs, 3, &v, Some(9)).unwrap().into_iter().map(|b| b.indices).collect();
        assert_eq!(a, b);
        assert_ne!(a.concat(), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn serde_roundtrip() {
        let v = Vocabulary::from_tokens(["q".to_string()]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
