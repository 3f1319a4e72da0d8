use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{Architecture, ModelSpec, Prediction};
use crate::autodiff::{bilstm_encode, checkpoint, LstmLayer, LstmVars, ParamStore, Tape, Tensor, Var};
use crate::data::{Batch, Label, PaddedSeq, Vocabulary};
use crate::embeddings::{fallback_vector, EmbeddingMatrix};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::ontology::{kb_attention_batch, ConceptGraph};

pub const DEFAULT_HEAD: &str = "main";
pub const EMBEDDING_PARAM: &str = "embedding";
const MANIFEST_VERSION: u32 = 1;

/// Per-call options of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardContext<'a> {
    pub head: &'a str,
    /// Required when `ModelSpec::kb_attention` is set.
    pub graph: Option<&'a ConceptGraph>,
    /// Dropout mask seed; `None` runs in inference mode.
    pub dropout_seed: Option<u64>,
}

impl<'a> ForwardContext<'a> {
    pub fn eval(head: &'a str, graph: Option<&'a ConceptGraph>) -> Self {
        ForwardContext {
            head,
            graph,
            dropout_seed: None,
        }
    }
}

/// Attention weights produced during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionTrace {
    /// ESIM premise → hypothesis soft alignment `[B, Tp, Th]`.
    pub premise_to_hypothesis: Option<Tensor>,
    /// ESIM hypothesis → premise soft alignment `[B, Th, Tp]`.
    pub hypothesis_to_premise: Option<Tensor>,
    /// Graph-distance weights `[B, Tp, Th]` and `[B, Th, Tp]`.
    pub kb: Option<(Tensor, Tensor)>,
    /// InferSent pooled sentence features `[B, 8H]`.
    pub features: Option<Tensor>,
}

#[derive(Debug)]
pub struct ForwardOutput {
    /// `[B, 3]` unnormalized class scores.
    pub logits: Var,
    pub trace: AttentionTrace,
}

fn head_param(head: &str, layer: usize, kind: &str) -> String {
    format!("head.{head}.layer{layer}.{kind}")
}

fn layer_sizes(spec: &ModelSpec) -> Vec<usize> {
    let mut sizes = vec![spec.classifier_input()];
    sizes.extend(&spec.mlp);
    sizes.push(ModelSpec::OUTPUTS);
    sizes
}

/// Registers a classifier head with uniform `±1/sqrt(fan_in)` weights and zero bias.
pub fn init_head(spec: &ModelSpec, params: &mut ParamStore, head: &str, rng: &mut ChaCha8Rng) {
    let sizes = layer_sizes(spec);
    for (k, pair) in sizes.windows(2).enumerate() {
        let bound = 1.0 / (pair[0] as f64).sqrt();
        params.init_uniform(&head_param(head, k, "w"), &[pair[0], pair[1]], bound, rng);
        params.init_zeros(&head_param(head, k, "b"), &[1, pair[1]]);
    }
}

/// Every parameter except the embedding table and classifier heads.
pub fn init_encoder(spec: &ModelSpec, params: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let (d, h) = (spec.embedding_dim, spec.hidden);
    match spec.architecture {
        Architecture::Bow => {}
        Architecture::InferSent => {
            LstmLayer::new("encoder.fwd", d, h).init(params, rng);
            LstmLayer::new("encoder.bwd", d, h).init(params, rng);
        }
        Architecture::Esim => {
            LstmLayer::new("encoder.fwd", d, h).init(params, rng);
            LstmLayer::new("encoder.bwd", d, h).init(params, rng);
            let blocks = if spec.kb_attention { 5 } else { 4 };
            let width = blocks * 2 * h;
            params.init_uniform("projection.w", &[width, h], 1.0 / (width as f64).sqrt(), rng);
            params.init_zeros("projection.b", &[1, h]);
            LstmLayer::new("composition.fwd", h, h).init(params, rng);
            LstmLayer::new("composition.bwd", h, h).init(params, rng);
        }
    }
}

/// `[V, D]` table: pretrained rows where available, deterministic hashed
/// vectors otherwise, and a zero padding row. Without pretrained vectors
/// the hashed rows are widened to `±0.5` so frozen tables stay informative.
pub fn embedding_table(vocab: &Vocabulary, dim: usize, vectors: Option<&EmbeddingMatrix>) -> Result<Tensor> {
    if let Some(m) = vectors {
        if m.dim() != dim {
            return Err(Error::Config {
                key: "model.embedding_dim".into(),
                message: format!("{dim} does not match embedding file dimension {}", m.dim()),
            });
        }
    }
    let scale = if vectors.is_some() { 1.0 } else { dim as f64 };
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for (id, tok) in vocab.tokens().iter().enumerate() {
        if id == crate::data::vocab::PAD {
            data.extend(std::iter::repeat(0.0).take(dim));
        } else if let (Some(m), false) = (vectors, Vocabulary::is_reserved(id)) {
            data.extend(m.lookup(tok));
        } else {
            data.extend(fallback_vector(tok, dim).into_iter().map(|v| v * scale));
        }
    }
    Tensor::new(vec![vocab.len(), dim], data)
}

fn mask3(mask: &Tensor) -> Result<Tensor> {
    let s = mask.shape();
    mask.clone().reshaped(vec![s[0], 1, s[1]])
}

/// `[B, V]` token counts over valid positions. Summing embeddings as
/// `counts · table` visits rows in vocabulary order, so the result does not
/// depend on token order or padding.
fn bag_of_ids(seq: &PaddedSeq, vocab: usize) -> Result<Tensor> {
    let (b, t) = (seq.batch_size(), seq.max_len());
    let mut counts = vec![0.0; b * vocab];
    for i in 0..b {
        for j in 0..t {
            if seq.mask.data()[i * t + j] > 0.0 {
                let id = seq.ids[i * t + j];
                if id >= vocab {
                    return Err(Error::Shape {
                        op: "bag_of_ids",
                        shapes: vec![vec![id], vec![vocab]],
                    });
                }
                counts[i * vocab + id] += 1.0;
            }
        }
    }
    Tensor::new(vec![b, vocab], counts)
}

fn embed(tape: &Tape, table: Var, seq: &PaddedSeq, dim: usize) -> Result<Var> {
    let flat = tape.embedding(table, &seq.ids)?;
    tape.reshape(flat, &[seq.batch_size(), seq.max_len(), dim])
}

/// Doubles a `[B, T]` mask along time.
fn doubled(mask: &Tensor) -> Result<Tensor> {
    let (b, t) = (mask.shape()[0], mask.shape()[1]);
    let mut data = Vec::with_capacity(2 * b * t);
    for row in mask.data().chunks(t) {
        data.extend_from_slice(row);
        data.extend_from_slice(row);
    }
    Tensor::new(vec![b, 2 * t], data)
}

/// Time-distributed linear layer on `[B, T, in]`.
fn linear3(tape: &Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let s = tape.shape(x)?;
    let out = tape.shape(w)?[1];
    let flat = tape.reshape(x, &[s[0] * s[1], s[2]])?;
    let y = tape.add(tape.matmul(flat, w)?, b)?;
    tape.reshape(y, &[s[0], s[1], out])
}

fn mlp(tape: &Tape, spec: &ModelSpec, params: &ParamStore, ctx: &ForwardContext, x: Var) -> Result<Var> {
    let layers = spec.mlp.len() + 1;
    let mut h = x;
    for k in 0..layers {
        let w = tape.param(params, &head_param(ctx.head, k, "w"))?;
        let b = tape.param(params, &head_param(ctx.head, k, "b"))?;
        h = tape.add(tape.matmul(h, w)?, b)?;
        if k + 1 < layers {
            h = tape.relu(h)?;
            if let Some(seed) = ctx.dropout_seed {
                h = tape.dropout(h, spec.dropout, seed.wrapping_add(k as u64))?;
            }
        }
    }
    Ok(h)
}

fn bind_pair(tape: &Tape, params: &ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<(LstmVars, LstmVars)> {
    Ok((
        LstmLayer::new(format!("{prefix}.fwd"), input, hidden).bind(tape, params)?,
        LstmLayer::new(format!("{prefix}.bwd"), input, hidden).bind(tape, params)?,
    ))
}

fn kb_weights(spec: &ModelSpec, batch: &Batch, graph: Option<&ConceptGraph>) -> Result<Option<(Tensor, Tensor)>> {
    if !spec.kb_attention {
        return Ok(None);
    }
    let graph = graph.ok_or_else(|| Error::invalid("knowledge-directed attention needs a concept graph"))?;
    Ok(Some(kb_attention_batch(
        &batch.premise.tokens,
        &batch.hypothesis.tokens,
        batch.premise.max_len(),
        batch.hypothesis.max_len(),
        graph,
        spec.kb_lambda,
    )?))
}

/// Runs one architecture on a batch and returns `[B, 3]` logits.
pub fn forward(spec: &ModelSpec, tape: &Tape, params: &ParamStore, batch: &Batch, ctx: &ForwardContext) -> Result<ForwardOutput> {
    let d = spec.embedding_dim;
    let table = tape.param(params, EMBEDDING_PARAM)?;
    let table_shape = tape.shape(table)?;
    if table_shape.get(1) != Some(&d) {
        return Err(Error::Shape {
            op: "embedding table",
            shapes: vec![table_shape, vec![d]],
        });
    }
    let (mp, mh) = (&batch.premise.mask, &batch.hypothesis.mask);
    let kb = kb_weights(spec, batch, ctx.graph)?;
    let mut trace = AttentionTrace {
        kb: kb.clone(),
        ..Default::default()
    };

    let z = match spec.architecture {
        Architecture::Bow => {
            let vocab = table_shape[0];
            let sp = tape.matmul(tape.constant(bag_of_ids(&batch.premise, vocab)?), table)?;
            let sh = tape.matmul(tape.constant(bag_of_ids(&batch.hypothesis, vocab)?), table)?;
            tape.concat(&[sp, sh], 1)?
        }
        Architecture::InferSent => {
            let xp = embed(tape, table, &batch.premise, d)?;
            let xh = embed(tape, table, &batch.hypothesis, d)?;
            let (fwd, bwd) = bind_pair(tape, params, "encoder", d, spec.hidden)?;
            let (xp, xh, mp, mh) = match &kb {
                Some((p2h, h2p)) => {
                    let ap = tape.bmm(tape.constant(p2h.clone()), xh)?;
                    let ah = tape.bmm(tape.constant(h2p.clone()), xp)?;
                    (tape.concat(&[xp, ap], 1)?, tape.concat(&[xh, ah], 1)?, doubled(mp)?, doubled(mh)?)
                }
                None => (xp, xh, mp.clone(), mh.clone()),
            };
            let u = tape.max_pool_time(bilstm_encode(tape, xp, &mp, &fwd, &bwd)?, &mp)?;
            let v = tape.max_pool_time(bilstm_encode(tape, xh, &mh, &fwd, &bwd)?, &mh)?;
            let diff = tape.abs(tape.sub(u, v)?)?;
            let prod = tape.mul(u, v)?;
            let z = tape.concat(&[u, v, diff, prod], 1)?;
            trace.features = Some(tape.value(z)?);
            z
        }
        Architecture::Esim => {
            let h = spec.hidden;
            let xp = embed(tape, table, &batch.premise, d)?;
            let xh = embed(tape, table, &batch.hypothesis, d)?;
            let (fwd, bwd) = bind_pair(tape, params, "encoder", d, h)?;
            let a = bilstm_encode(tape, xp, mp, &fwd, &bwd)?;
            let b = bilstm_encode(tape, xh, mh, &fwd, &bwd)?;
            let e = tape.bmm(a, tape.transpose_last(b)?)?;
            let att_a = tape.softmax(e, Some(&mask3(mh)?))?;
            let att_b = tape.softmax(tape.transpose_last(e)?, Some(&mask3(mp)?))?;
            let a_t = tape.bmm(att_a, b)?;
            let b_t = tape.bmm(att_b, a)?;
            trace.premise_to_hypothesis = Some(tape.value(att_a)?);
            trace.hypothesis_to_premise = Some(tape.value(att_b)?);

            let mut ma = vec![a, a_t, tape.sub(a, a_t)?, tape.mul(a, a_t)?];
            let mut mb = vec![b, b_t, tape.sub(b, b_t)?, tape.mul(b, b_t)?];
            if let Some((p2h, h2p)) = &kb {
                ma.push(tape.bmm(tape.constant(p2h.clone()), b)?);
                mb.push(tape.bmm(tape.constant(h2p.clone()), a)?);
            }
            let pw = tape.param(params, "projection.w")?;
            let pb = tape.param(params, "projection.b")?;
            let pa = tape.relu(linear3(tape, tape.concat(&ma, 2)?, pw, pb)?)?;
            let ph = tape.relu(linear3(tape, tape.concat(&mb, 2)?, pw, pb)?)?;
            let (cf, cb) = bind_pair(tape, params, "composition", h, h)?;
            let va = bilstm_encode(tape, pa, mp, &cf, &cb)?;
            let vb = bilstm_encode(tape, ph, mh, &cf, &cb)?;
            tape.concat(
                &[
                    tape.mean_pool_time(va, mp)?,
                    tape.max_pool_time(va, mp)?,
                    tape.mean_pool_time(vb, mh)?,
                    tape.max_pool_time(vb, mh)?,
                ],
                1,
            )?
        }
    };
    let logits = mlp(tape, spec, params, ctx, z)?;
    Ok(ForwardOutput { logits, trace })
}

/// Saved alongside the parameter checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub kind: String,
    pub spec: ModelSpec,
    pub heads: Vec<String>,
    pub label_order: Vec<Label>,
    pub embedding_provenance: String,
    pub vocab: Vocabulary,
}

/// A neural classifier: spec, vocabulary and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NliModel {
    pub spec: ModelSpec,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub heads: Vec<String>,
    pub embedding_provenance: String,
}

impl NliModel {
    pub fn new(spec: ModelSpec, vocab: Vocabulary, vectors: Option<&EmbeddingMatrix>, heads: &[&str]) -> Result<Self> {
        spec.validate()?;
        if heads.is_empty() {
            return Err(Error::invalid("a model needs at least one classifier head"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = ParamStore::new();
        params.insert(EMBEDDING_PARAM, embedding_table(&vocab, spec.embedding_dim, vectors)?);
        init_encoder(&spec, &mut params, &mut rng);
        for head in heads {
            init_head(&spec, &mut params, head, &mut rng);
        }
        Ok(NliModel {
            spec,
            vocab,
            params,
            heads: heads.iter().map(|h| h.to_string()).collect(),
            embedding_provenance: vectors.map_or_else(|| "random".to_string(), |m| m.provenance.clone()),
        })
    }

    /// Adds a freshly initialized head, replacing one of the same name.
    pub fn add_head(&mut self, head: &str, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6865_6164);
        init_head(&self.spec, &mut self.params, head, &mut rng);
        if !self.heads.iter().any(|h| h == head) {
            self.heads.push(head.to_string());
        }
    }

    pub fn has_head(&self, head: &str) -> bool {
        self.heads.iter().any(|h| h == head)
    }

    /// Whether the optimizer may update parameter `name`.
    pub fn is_trainable(&self, name: &str) -> bool {
        name != EMBEDDING_PARAM || self.spec.trainable_embeddings
    }

    pub fn forward(&self, tape: &Tape, batch: &Batch, ctx: &ForwardContext) -> Result<ForwardOutput> {
        if !self.has_head(ctx.head) {
            return Err(Error::invalid(format!("model has no head `{}`", ctx.head)));
        }
        forward(&self.spec, tape, &self.params, batch, ctx)
    }

    pub fn predict(&self, batch: &Batch, head: &str, graph: Option<&ConceptGraph>) -> Result<Vec<Prediction>> {
        let tape = Tape::new();
        let out = self.forward(&tape, batch, &ForwardContext::eval(head, graph))?;
        let logits = tape.value(out.logits)?;
        Ok(logits.data().chunks(ModelSpec::OUTPUTS).map(Prediction::from_logits).collect())
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            format_version: MANIFEST_VERSION,
            kind: "neural".into(),
            spec: self.spec.clone(),
            heads: self.heads.clone(),
            label_order: Label::ALL.to_vec(),
            embedding_provenance: self.embedding_provenance.clone(),
            vocab: self.vocab.clone(),
        }
    }

    pub fn save(&self, ckpt: &Path, manifest: &Path) -> Result<()> {
        checkpoint::save(ckpt, &self.params)?;
        write_file(manifest, serde_json::to_string_pretty(&self.manifest())?)
    }

    pub fn load(ckpt: &Path, manifest: &Path) -> Result<Self> {
        let m: ModelManifest = serde_json::from_str(&read_to_string(manifest)?)?;
        if m.format_version != MANIFEST_VERSION || m.kind != "neural" {
            return Err(Error::invalid(format!(
                "{}: unsupported manifest (kind {}, version {})",
                manifest.display(),
                m.kind,
                m.format_version
            )));
        }
        if m.label_order != Label::ALL {
            return Err(Error::invalid(format!("{}: unexpected label order", manifest.display())));
        }
        m.spec.validate()?;
        let params = checkpoint::load(ckpt)?;
        Ok(NliModel {
            spec: m.spec,
            vocab: m.vocab,
            params,
            heads: m.heads,
            embedding_provenance: m.embedding_provenance,
        })
    }
}

/// Adds seeded uniform noise in `(-scale, scale)` to every parameter.
pub fn jitter(params: &mut ParamStore, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        if let Some(t) = params.get_mut(&name) {
            for v in t.data_mut() {
                *v += rng.gen_range(-scale..scale);
            }
        }
    }
}
