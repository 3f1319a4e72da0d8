//! Skip-gram with negative sampling over word plus character n-gram inputs.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::EmbeddingMatrix;
use super::subword::{SubwordIndex, SubwordTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_count: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub buckets: u32,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.05,
            min_count: 1,
            ngram_min: 3,
            ngram_max: 6,
            buckets: 1 << 17,
            seed: 1,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if self.window == 0 {
            return bad("window", "must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives", "must be at least 1");
        }
        if self.min_count == 0 {
            return bad("min_count", "must be at least 1");
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return bad("ngram_min", "must satisfy 1 <= ngram_min <= ngram_max");
        }
        if self.buckets == 0 {
            return bad("buckets", "must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        Ok(())
    }

    pub fn subword_index(&self) -> SubwordIndex {
        SubwordIndex {
            min_n: self.ngram_min,
            max_n: self.ngram_max,
            buckets: self.buckets,
        }
    }
}

/// Embeddings plus the per-epoch mean loss of the run that produced them.
#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub matrix: EmbeddingMatrix,
    pub epoch_losses: Vec<f64>,
}

/// Tokens with count >= `min_count`, most frequent first then lexicographic.
fn corpus_vocab(corpus: &[Vec<String>], min_count: usize) -> Vec<(String, u64)> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in corpus {
        for t in s {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut v: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

struct Sgns<'a> {
    cfg: &'a SkipGramConfig,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    subwords: SubwordTable,
    ngrams: Vec<Vec<u32>>,
    /// Cumulative unigram^0.75 distribution over token ids.
    noise_cdf: Vec<f64>,
}

impl Sgns<'_> {
    fn sample_negative(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.noise_cdf.last().expect("non-empty vocabulary");
        let r = rng.gen::<f64>() * total;
        self.noise_cdf.partition_point(|&c| c <= r).min(self.noise_cdf.len() - 1)
    }

    /// One positive update plus `negatives` negative ones; returns the loss.
    fn update(&mut self, center: usize, context: usize, lr: f64, rng: &mut ChaCha8Rng) -> f64 {
        let d = self.dim;
        let grams = &self.ngrams[center];
        let mut h = self.input[center * d..(center + 1) * d].to_vec();
        for &g in grams {
            for (hi, v) in h.iter_mut().zip(self.subwords.vector(g)) {
                *hi += v;
            }
        }
        let mut grad_h = vec![0.0; d];
        let mut loss = 0.0;
        let mut targets = Vec::with_capacity(1 + self.cfg.negatives);
        targets.push((context, 1.0));
        for _ in 0..self.cfg.negatives {
            let n = self.sample_negative(rng);
            if n != context {
                targets.push((n, 0.0));
            }
        }
        for (t, label) in targets {
            let o = &mut self.output[t * d..(t + 1) * d];
            let score: f64 = h.iter().zip(o.iter()).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-score).exp());
            loss -= if label == 1.0 {
                p.max(1e-12).ln()
            } else {
                (1.0 - p).max(1e-12).ln()
            };
            let g = lr * (label - p);
            for k in 0..d {
                grad_h[k] += g * o[k];
                o[k] += g * h[k];
            }
        }
        // the input is a sum of 1 + |grams| vectors; the shared step is
        // divided among them so the composed vector moves by one step
        let share = 1.0 / (1 + grams.len()) as f64;
        for (w, gh) in self.input[center * d..(center + 1) * d].iter_mut().zip(&grad_h) {
            *w += share * gh;
        }
        for &g in grams {
            for (w, gh) in self.subwords.vector_mut(g).iter_mut().zip(&grad_h) {
                *w += share * gh;
            }
        }
        loss
    }
}

/// Core training loop. `input` holds the initial word vectors for
/// `tokens`; `counts[i]` is the corpus frequency of token `i`.
fn train(
    tokens: &[String],
    input: Vec<f64>,
    subwords: SubwordTable,
    counts: &[u64],
    corpus: &[Vec<usize>],
    cfg: &SkipGramConfig,
    seed: u64,
) -> (Vec<f64>, SubwordTable, Vec<f64>) {
    let d = cfg.dim;
    let mut cum = 0.0;
    let noise_cdf = counts
        .iter()
        .map(|&c| {
            cum += (c as f64).powf(0.75);
            cum
        })
        .collect();
    let mut model = Sgns {
        cfg,
        dim: d,
        input,
        output: vec![0.0; tokens.len() * d],
        ngrams: tokens.iter().map(|t| subwords.index.buckets_of(t)).collect(),
        subwords,
        noise_cdf,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_tokens: usize = corpus.iter().map(Vec::len).sum();
    let total_work = (cfg.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut loss_sum, mut n_updates) = (0.0, 0usize);
        for sentence in corpus {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = cfg.lr * (1.0 - processed as f64 / total_work).max(1e-4);
                processed += 1;
                let w = rng.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(w);
                let hi = (pos + w).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    loss_sum += model.update(center, sentence[ctx_pos], lr, &mut rng);
                    n_updates += 1;
                }
            }
        }
        losses.push(if n_updates == 0 { 0.0 } else { loss_sum / n_updates as f64 });
    }
    (model.input, model.subwords, losses)
}

fn composed(tokens: &[String], input: &[f64], subwords: &SubwordTable, dim: usize, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut out = input.to_vec();
    for (i, t) in tokens.iter().enumerate() {
        if !keep(i) {
            continue;
        }
        if let Some(sum) = subwords.compose(t) {
            for (o, s) in out[i * dim..(i + 1) * dim].iter_mut().zip(sum) {
                *o += s;
            }
        }
    }
    out
}

/// Trains vectors from scratch. Each final vector is the word vector plus
/// the sum of its n-gram bucket vectors.
pub fn train_subword_skipgram(corpus: &[Vec<String>], cfg: &SkipGramConfig, seed: u64) -> Result<TrainedEmbeddings> {
    cfg.validate()?;
    let vocab = corpus_vocab(corpus, cfg.min_count);
    if vocab.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let tokens: Vec<String> = vocab.iter().map(|(t, _)| t.clone()).collect();
    let counts: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
    let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let ids: Vec<Vec<usize>> = corpus.iter().map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect()).collect();

    let bound = 1.0 / cfg.dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input: Vec<f64> = (0..tokens.len() * cfg.dim).map(|_| rng.gen_range(-bound..=bound)).collect();
    let subwords = SubwordTable::new(cfg.subword_index(), cfg.dim, seed, bound);
    let (input, subwords, losses) = train(&tokens, input, subwords, &counts, &ids, cfg, seed.wrapping_add(1));
    let data = composed(&tokens, &input, &subwords, cfg.dim, |_| true);
    let mut matrix = EmbeddingMatrix::new(tokens, cfg.dim, data, "skipgram")?;
    matrix.subwords = Some(subwords);
    Ok(TrainedEmbeddings {
        matrix,
        epoch_losses: losses,
    })
}

/// Continues training `init` on each named corpus in turn.
///
/// New tokens start from `lookup` on the current matrix (subword
/// composition when available, otherwise the seeded fallback). Existing
/// vectors are the starting word vectors and n-gram vectors start at zero,
/// so the composed vector of every known token initially equals its
/// stored value. Tokens absent from a corpus keep their vectors.
pub fn fine_tune_chain(
    init: &EmbeddingMatrix,
    corpora: &[(String, Vec<Vec<String>>)],
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<TrainedEmbeddings> {
    cfg.validate()?;
    if init.dim() != cfg.dim {
        return Err(Error::Config {
            key: "dim".into(),
            message: format!("initial vectors have dimension {} but training uses {}", init.dim(), cfg.dim),
        });
    }
    let mut current = init.clone();
    let mut all_losses = Vec::new();
    for (step, (name, corpus)) in corpora.iter().enumerate() {
        let vocab = corpus_vocab(corpus, cfg.min_count);
        let mut tokens = current.tokens().to_vec();
        let mut data = current.data().to_vec();
        let mut counts = vec![0u64; tokens.len()];
        for (t, c) in &vocab {
            match current.position(t) {
                Some(i) => counts[i] = *c,
                None => {
                    data.extend(current.lookup(t));
                    tokens.push(t.clone());
                    counts.push(*c);
                }
            }
        }
        let provenance = if current.provenance.is_empty() {
            format!("init→{name}")
        } else {
            format!("{}→{name}", current.provenance)
        };
        if cfg.epochs == 0 || vocab.is_empty() {
            let subwords = current.subwords.take();
            current = EmbeddingMatrix::new(tokens, cfg.dim, data, provenance)?;
            current.subwords = subwords;
            continue;
        }
        let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let ids: Vec<Vec<usize>> = corpus
            .iter()
            .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).filter(|&i| counts[i] > 0).collect())
            .collect();
        let subwords = SubwordTable::new(cfg.subword_index(), cfg.dim, seed, 0.0);
        let run_seed = seed.wrapping_add(step as u64 + 1);
        let (input, subwords, losses) = train(&tokens, data, subwords, &counts, &ids, cfg, run_seed);
        all_losses.extend(losses);
        let data = composed(&tokens, &input, &subwords, cfg.dim, |i| counts[i] > 0);
        current = EmbeddingMatrix::new(tokens, cfg.dim, data, provenance)?;
        current.subwords = Some(subwords);
    }
    Ok(TrainedEmbeddings {
        matrix: current,
        epoch_losses: all_losses,
    })
}
