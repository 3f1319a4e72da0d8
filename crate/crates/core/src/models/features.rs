use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NliPair;
use crate::embeddings::{cosine, EmbeddingMatrix};
use crate::ontology::{pair_features_from_tokens, ConceptGraph};

pub const NUM_FEATURES: usize = 35;

/// Frozen feature order, one name per line.
pub const FEATURE_MANIFEST: &str = include_str!("../../data/feature_manifest.txt");

pub const DEFAULT_NEGATIONS: [&str; 9] = [
    "no", "not", "n't", "denies", "denied", "without", "negative", "never", "free of",
];

pub fn feature_names() -> Vec<&'static str> {
    FEATURE_MANIFEST.lines().filter(|l| !l.is_empty()).collect()
}

/// Hex SHA-256 of the manifest; stored with trained feature models.
pub fn feature_manifest_hash() -> String {
    Sha256::digest(FEATURE_MANIFEST.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// A complete feature vector in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn named(&self) -> Vec<(&'static str, f64)> {
        feature_names().into_iter().zip(self.0.iter().copied()).collect()
    }
}

/// Document frequencies over the sentences of a training split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: usize,
    pub df: HashMap<String, usize>,
}

impl IdfTable {
    /// Each premise and each hypothesis counts as one document.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a NliPair>) -> Self {
        let mut table = IdfTable::default();
        for p in pairs {
            for sent in [&p.premise, &p.hypothesis] {
                table.documents += 1;
                for tok in sent.iter().collect::<BTreeSet<_>>() {
                    *table.df.entry(tok.clone()).or_insert(0) += 1;
                }
            }
        }
        table
    }

    /// Smoothed `ln((1 + N) / (1 + df)) + 1`; unseen tokens get the maximum.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        ((1.0 + self.documents as f64) / (1.0 + df)).ln() + 1.0
    }

    fn vector<'a>(&self, tokens: &'a [String]) -> BTreeMap<&'a str, f64> {
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
        for (t, v) in tf.iter_mut() {
            *v *= self.idf(t);
        }
        tf
    }
}

/// Inputs shared by every pair.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    pub graph: &'a ConceptGraph,
    pub idf: &'a IdfTable,
    pub negations: &'a [String],
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with orders `1..=min(max_n, |candidate|)`, uniform weights,
/// clipped counts, brevity penalty and no smoothing: any zero precision gives 0.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    let orders = max_n.min(candidate.len());
    if orders == 0 || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / (candidate.len() + 1 - n) as f64).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_sum / orders as f64).exp()
}

/// Unit-cost edit distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn char_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// Token-set Jaccard; two empty sentences score 1.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Occurrences of negation cues; multi-word cues match as token runs.
pub fn negation_count(tokens: &[String], negations: &[String]) -> usize {
    negations
        .iter()
        .map(|cue| {
            let cue: Vec<&str> = cue.split_whitespace().collect();
            if cue.is_empty() || cue.len() > tokens.len() {
                return 0;
            }
            tokens.windows(cue.len()).filter(|w| w.iter().zip(&cue).all(|(t, c)| t == c)).count()
        })
        .sum()
}

fn distances(a: &[f64], b: &[f64]) -> [f64; 3] {
    let euclid = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let manhattan = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    [cosine(a, b), euclid, manhattan]
}

fn pooled(tokens: &[String], m: &EmbeddingMatrix) -> (Vec<f64>, Vec<f64>) {
    let d = m.dim();
    if tokens.is_empty() {
        return (vec![0.0; d], vec![0.0; d]);
    }
    let mut mean = vec![0.0; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for t in tokens {
        let v = m.lookup(t);
        for k in 0..d {
            mean[k] += v[k];
            max[k] = max[k].max(v[k]);
        }
    }
    mean.iter_mut().for_each(|x| *x /= tokens.len() as f64);
    (mean, max)
}

fn tfidf_distances(p: &[String], h: &[String], idf: &IdfTable) -> [f64; 3] {
    let vp = idf.vector(p);
    let vh = idf.vector(h);
    let keys: BTreeSet<&str> = vp.keys().chain(vh.keys()).copied().collect();
    let a: Vec<f64> = keys.iter().map(|k| vp.get(k).copied().unwrap_or(0.0)).collect();
    let b: Vec<f64> = keys.iter().map(|k| vh.get(k).copied().unwrap_or(0.0)).collect();
    distances(&a, &b)
}

/// The 35 lexical, embedding and graph features of one pair.
pub fn extract_features(premise: &[String], hypothesis: &[String], ctx: &FeatureContext) -> FeatureVector {
    let mut f = Vec::with_capacity(NUM_FEATURES);
    f.push(bleu(premise, hypothesis, 2));
    f.push(bleu(hypothesis, premise, 2));

    let (lp, lh) = (premise.len() as f64, hypothesis.len() as f64);
    let ratio = if lp > 0.0 { lh / lp } else { 0.0 };
    f.extend([lp, lh, (lp - lh).abs(), lp.min(lh), lp.max(lh), ratio]);

    let np = negation_count(premise, ctx.negations);
    let nh = negation_count(hypothesis, ctx.negations);
    f.extend([
        np as f64,
        nh as f64,
        np.abs_diff(nh) as f64,
        f64::from(u8::from((np > 0) != (nh > 0))),
    ]);

    f.extend(tfidf_distances(premise, hypothesis, ctx.idf));

    let (sp, sh) = (premise.join(" "), hypothesis.join(" "));
    let char_lev = char_levenshtein(&sp, &sh);
    let longest = sp.chars().count().max(sh.chars().count());
    f.push(char_lev as f64);
    f.push(levenshtein(premise, hypothesis) as f64);
    f.push(jaccard(premise, hypothesis));
    f.push(if longest == 0 { 0.0 } else { char_lev as f64 / longest as f64 });

    let (mean_p, max_p) = pooled(premise, ctx.embeddings);
    let (mean_h, max_h) = pooled(hypothesis, ctx.embeddings);
    f.extend(distances(&mean_p, &mean_h));
    f.extend(distances(&max_p, &max_h));

    f.extend(pair_features_from_tokens(premise, hypothesis, ctx.graph));
    debug_assert_eq!(f.len(), NUM_FEATURES);
    FeatureVector(f)
}

pub fn pair_features(pair: &NliPair, ctx: &FeatureContext) -> FeatureVector {
    extract_features(&pair.premise, &pair.hypothesis, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn negs() -> Vec<String> {
        DEFAULT_NEGATIONS.iter().map(|s| s.to_string()).collect()
    }

    fn with_ctx<R>(f: impl FnOnce(&FeatureContext) -> R) -> R {
        let emb = EmbeddingMatrix::new(vec!["fever".into()], 4, vec![0.1, 0.2, 0.3, 0.4], "t").unwrap();
        let graph = ConceptGraph::demo();
        let pairs = [NliPair::new("a", toks("patient has fever"), toks("no fever"), crate::data::Label::Neutral).unwrap()];
        let idf = IdfTable::from_pairs(&pairs);
        let negations = negs();
        f(&FeatureContext {
            embeddings: &emb,
            graph: &graph,
            idf: &idf,
            negations: &negations,
        })
    }

    #[test]
    fn manifest_matches_layout() {
        let names = feature_names();
        assert_eq!(names.len(), NUM_FEATURES);
        assert_eq!(names.iter().collect::<BTreeSet<_>>().len(), NUM_FEATURES);
        assert_eq!(&names[25..], &crate::ontology::PAIR_FEATURE_NAMES);
        assert_eq!(feature_manifest_hash().len(), 64);
    }

    #[test]
    fn bleu_brevity_example() {
        let b = bleu(&toks("a b c"), &toks("a b c d"), 2);
        assert!((b - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.7165).abs() < 1e-4);
        assert_eq!(bleu(&toks("a b"), &toks("b a"), 2), 0.0);
        assert_eq!(bleu(&toks("a"), &toks("a"), 2), 1.0);
    }

    fn lev_oracle(a: &str, b: &str) -> usize {
        // Plain recursive definition with memoization.
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        fn go(i: usize, j: usize, a: &[char], b: &[char], memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if i == 0 {
                j
            } else if j == 0 {
                i
            } else {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                (go(i - 1, j, a, b, memo) + 1)
                    .min(go(i, j - 1, a, b, memo) + 1)
                    .min(go(i - 1, j - 1, a, b, memo) + cost)
            };
            memo[i][j] = Some(v);
            v
        }
        go(a.len(), b.len(), &a, &b, &mut memo)
    }

    #[test]
    fn kitten_sitting() {
        assert_eq!(char_levenshtein("kitten", "sitting"), 3);
        assert_eq!(lev_oracle("kitten", "sitting"), 3);
    }

    proptest! {
        #[test]
        fn levenshtein_matches_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            prop_assert_eq!(char_levenshtein(&a, &b), lev_oracle(&a, &b));
        }

        #[test]
        fn features_total_and_finite(p in proptest::collection::vec("[a-z]{1,6}|no|not|fever", 0..8),
                                     h in proptest::collection::vec("[a-z]{1,6}|no|fever", 0..8)) {
            let fv = with_ctx(|ctx| extract_features(&p, &h, ctx));
            prop_assert_eq!(fv.values().len(), NUM_FEATURES);
            prop_assert!(fv.values().iter().all(|v| v.is_finite()));
            let again = with_ctx(|ctx| extract_features(&p, &h, ctx));
            prop_assert_eq!(fv, again);
        }
    }

    #[test]
    fn identical_sentences() {
        let s = toks("patient has fever without cough");
        let fv = with_ctx(|ctx| extract_features(&s, &s, ctx));
        let named: HashMap<_, _> = fv.named().into_iter().collect();
        assert_eq!(named["bleu_premise_to_hypothesis"], 1.0);
        assert_eq!(named["char_levenshtein"], 0.0);
        assert!((named["tfidf_cosine"] - 1.0).abs() < 1e-12);
        assert_eq!(named["token_jaccard"], 1.0);
        assert_eq!(named["neg_one_side"], 0.0);
    }

    #[test]
    fn negation_cues() {
        let n = negs();
        assert_eq!(negation_count(&toks("free of fever, no cough"), &n), 2);
        assert_eq!(negation_count(&toks("patient doesn't smoke"), &n), 1);
        let fv = with_ctx(|ctx| extract_features(&toks("no fever"), &toks("fever"), ctx));
        assert_eq!(&fv.values()[8..12], &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn idf_smoothing() {
        let pairs = [NliPair::new("a", toks("x y"), toks("x"), crate::data::Label::Neutral).unwrap()];
        let idf = IdfTable::from_pairs(&pairs);
        assert_eq!(idf.documents, 2);
        assert!((idf.idf("x") - 1.0).abs() < 1e-12);
        assert!((idf.idf("y") - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
        assert!((idf.idf("zzz") - (3.0f64.ln() + 1.0)).abs() < 1e-12);
    }
}
