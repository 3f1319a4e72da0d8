use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifier of the n-gram hash, recorded so tables built with a different
/// hash are not mixed.
pub const HASH_FNV1A_32: &str = "fnv1a32";

/// Character n-gram hashing of `<token>` into a fixed number of buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordIndex {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: u32,
}

impl Default for SubwordIndex {
    fn default() -> Self {
        SubwordIndex {
            min_n: 3,
            max_n: 6,
            buckets: 1 << 17,
        }
    }
}

pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl SubwordIndex {
    pub fn hash_id(&self) -> &'static str {
        HASH_FNV1A_32
    }

    /// Bucket ids of all character n-grams of `<token>`, in order of
    /// start position then length.
    pub fn buckets_of(&self, token: &str) -> Vec<u32> {
        let wrapped: Vec<char> = format!("<{token}>").chars().collect();
        let mut out = Vec::new();
        let mut buf = String::new();
        for start in 0..wrapped.len() {
            for n in self.min_n..=self.max_n {
                if start + n > wrapped.len() {
                    break;
                }
                buf.clear();
                buf.extend(&wrapped[start..start + n]);
                out.push(fnv1a_32(buf.as_bytes()) % self.buckets);
            }
        }
        out
    }
}

/// Sparse bucket vectors. Buckets never written hold a deterministic
/// initial value derived from `seed` and the bucket id.
#[derive(Debug, Clone)]
pub struct SubwordTable {
    pub index: SubwordIndex,
    pub dim: usize,
    seed: u64,
    init_bound: f64,
    vectors: HashMap<u32, Vec<f64>>,
}

impl SubwordTable {
    pub fn new(index: SubwordIndex, dim: usize, seed: u64, init_bound: f64) -> Self {
        SubwordTable {
            index,
            dim,
            seed,
            init_bound,
            vectors: HashMap::new(),
        }
    }

    fn initial(&self, bucket: u32) -> Vec<f64> {
        if self.init_bound == 0.0 {
            return vec![0.0; self.dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (u64::from(bucket) << 20) ^ 0x5eed_b0c4);
        (0..self.dim).map(|_| rng.gen_range(-self.init_bound..=self.init_bound)).collect()
    }

    pub fn vector(&self, bucket: u32) -> Vec<f64> {
        self.vectors.get(&bucket).cloned().unwrap_or_else(|| self.initial(bucket))
    }

    pub fn vector_mut(&mut self, bucket: u32) -> &mut Vec<f64> {
        if !self.vectors.contains_key(&bucket) {
            let v = self.initial(bucket);
            self.vectors.insert(bucket, v);
        }
        self.vectors.get_mut(&bucket).expect("inserted")
    }

    /// Sum of the bucket vectors of `token`'s n-grams, or `None` if it has none.
    pub fn compose(&self, token: &str) -> Option<Vec<f64>> {
        let buckets = self.index.buckets_of(token);
        if buckets.is_empty() {
            return None;
        }
        let mut sum = vec![0.0; self.dim];
        for b in buckets {
            let v = match self.vectors.get(&b) {
                Some(v) => std::borrow::Cow::Borrowed(v.as_slice()),
                None => std::borrow::Cow::Owned(self.initial(b)),
            };
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
        Some(sum)
    }
}
