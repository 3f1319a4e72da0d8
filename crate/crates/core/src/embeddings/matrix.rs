use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::subword::SubwordTable;
use crate::error::{read_to_string, write_file, Error, Result};

/// Dense token vectors with an optional subword table for unknown tokens.
#[derive(Debug)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    /// Chain of sources the vectors came from, joined by "→".
    pub provenance: String,
    pub subwords: Option<SubwordTable>,
    oov_cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl Clone for EmbeddingMatrix {
    fn clone(&self) -> Self {
        EmbeddingMatrix {
            tokens: self.tokens.clone(),
            index: self.index.clone(),
            dim: self.dim,
            data: self.data.clone(),
            provenance: self.provenance.clone(),
            subwords: self.subwords.clone(),
            oov_cache: Mutex::new(self.oov_cache.lock().expect("cache lock").clone()),
        }
    }
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.dim == other.dim && self.data == other.data
    }
}

impl EmbeddingMatrix {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        if data.len() != tokens.len() * dim {
            return Err(Error::invalid(format!(
                "{} values do not fill {} tokens of dimension {dim}",
                data.len(),
                tokens.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "embedding vectors".into(),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token `{t}`")));
            }
        }
        Ok(EmbeddingMatrix {
            tokens,
            index,
            dim,
            data,
            provenance: provenance.into(),
            subwords: None,
            oov_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.position(token).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Vector for any token: the stored row, else the subword composition,
    /// else a random vector seeded by the token that is cached so every
    /// lookup of the same token agrees.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.get(token) {
            return v.to_vec();
        }
        if let Some(v) = self.subwords.as_ref().and_then(|s| s.compose(token)) {
            return v;
        }
        let mut cache = self.oov_cache.lock().expect("cache lock");
        cache.entry(token.to_string()).or_insert_with(|| fallback_vector(token, self.dim)).clone()
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        cosine(&self.lookup(a), &self.lookup(b))
    }

    /// Text format: header `count dim`, then one `token v1 .. vdim` line per
    /// token. Values use the shortest decimal form that parses back to the
    /// same f64, so a write/read cycle is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.len(), self.dim).expect("string write");
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            for v in self.row(i) {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format. A first line of exactly two unsigned
    /// integers is a `count dim` header and is checked against the body.
    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
        let mut header: Option<(usize, usize, usize)> = None;
        if let Some(&(i, first)) = lines.peek() {
            let fields: Vec<&str> = first.split_whitespace().collect();
            if let [c, d] = fields[..] {
                if let (Ok(c), Ok(d)) = (c.parse::<usize>(), d.parse::<usize>()) {
                    header = Some((i + 1, c, d));
                    lines.next();
                }
            }
        }
        let mut dim = header.map(|h| h.2);
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line");
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source, line_no, format!("bad value: {e}")))?;
            match dim {
                Some(d) if d != values.len() => {
                    return Err(Error::parse(source, line_no, format!("expected {d} values, found {}", values.len())))
                }
                None => dim = Some(values.len()),
                _ => {}
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(source, line_no, "non-finite value"));
            }
            tokens.push(token.to_string());
            data.extend(values);
        }
        if let Some((line, count, _)) = header {
            if count != tokens.len() {
                return Err(Error::parse(source, line, format!("header declares {count} vectors but {} follow", tokens.len())));
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(source, 1, "no vectors"))?;
        EmbeddingMatrix::new(tokens, dim, data, source_name(source)).map_err(|e| Error::parse(source, 0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }
}

fn source_name(source: &str) -> String {
    Path::new(source)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.to_string())
}

/// Uniform in `[-0.5/dim, 0.5/dim]`, seeded by the token's bytes.
pub fn fallback_vector(token: &str, dim: usize) -> Vec<f64> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let bound = 0.5 / dim as f64;
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::subword::{SubwordIndex, SubwordTable};

    fn small() -> EmbeddingMatrix {
        EmbeddingMatrix::new(vec!["a".into(), "bb".into()], 3, vec![0.1, -2.5, 1e-9, 1.0 / 3.0, 7.0, -0.0], "test").unwrap()
    }

    #[test]
    fn text_roundtrip_exact() {
        let m = small();
        let back = EmbeddingMatrix::from_text(&m.to_text(), "x").unwrap();
        assert_eq!(back.tokens(), m.tokens());
        for (a, b) in m.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-6);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn short_line_reports_line() {
        let err = EmbeddingMatrix::from_text("a 1 2 3\nb 1 2\n", "v.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn header_count_mismatch() {
        let err = EmbeddingMatrix::from_text("2 5\na 1 2 3 4 5\nb 1 2 3 4 5\nc 1 2 3 4 5\n", "v").unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn header_is_optional() {
        let m = EmbeddingMatrix::from_text("a 1 2\nb 3 4\n", "v").unwrap();
        assert_eq!((m.len(), m.dim()), (2, 2));
    }

    #[test]
    fn lookup_contract() {
        let mut m = small();
        assert_eq!(m.lookup("a"), m.get("a").unwrap());
        let u1 = m.lookup("zzz");
        assert_eq!(u1, m.lookup("zzz"));
        assert!(u1.iter().all(|v| v.abs() <= 0.5 / 3.0));

        let idx = SubwordIndex {
            min_n: 3,
            max_n: 4,
            buckets: 128,
        };
        m.subwords = Some(SubwordTable::new(idx, 3, 1, 0.1));
        let table = m.subwords.as_ref().unwrap();
        let expected = idx.buckets_of("qqq").iter().fold(vec![0.0; 3], |mut acc, &b| {
            for (s, x) in acc.iter_mut().zip(table.vector(b)) {
                *s += x;
            }
            acc
        });
        assert_eq!(m.lookup("qqq"), expected);
    }
}
