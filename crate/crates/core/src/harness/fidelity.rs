//! Randomized finite-difference checks of every tape primitive and every
//! model variant on tiny instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{bilstm_encode, grad_check, GradCheckReport, LstmLayer, ParamStore, Tape, Tensor, Var};
use crate::data::{Batch, Label, NliPair, Vocabulary};
use crate::error::{Error, Result};
use crate::models::neural::jitter;
use crate::models::{forward, Architecture, ForwardContext, ModelSpec, DEFAULT_HEAD};
use crate::ontology::ConceptGraph;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;

pub const PRIMITIVES: &[&str] = &[
    "matmul",
    "bmm",
    "transpose_last",
    "reshape",
    "add",
    "sub",
    "mul",
    "scale",
    "abs",
    "relu",
    "tanh",
    "sigmoid",
    "softmax",
    "concat",
    "narrow",
    "max_pool_time",
    "mean_pool_time",
    "sum_axis",
    "sum",
    "embedding",
    "cross_entropy",
    "dropout",
    "lstm",
];

/// The five model variants as `(architecture, knowledge attention)`.
pub const VARIANTS: [(Architecture, bool); 5] = [
    (Architecture::Bow, false),
    (Architecture::InferSent, false),
    (Architecture::Esim, false),
    (Architecture::InferSent, true),
    (Architecture::Esim, true),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityCase {
    pub target: String,
    pub instance: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

/// Values bounded away from zero so kinked primitives stay differentiable.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

/// Random mask with at least one valid position per row.
fn random_mask(rng: &mut ChaCha8Rng, b: usize, t: usize) -> Tensor {
    let mut data = Vec::with_capacity(b * t);
    for _ in 0..b {
        let len = rng.gen_range(1..=t);
        data.extend((0..t).map(|i| if i < len { 1.0 } else { 0.0 }));
    }
    Tensor::new(vec![b, t], data).expect("sized")
}

/// Contracts `out` against a fixed random weight tensor of the same shape.
fn weighted_sum(tape: &Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=4)
}

/// Checks one primitive on a randomized instance drawn from `seed`.
pub fn primitive_grad_check(name: &str, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let (b, m, k, n) = (dim(&mut rng), dim(&mut rng), dim(&mut rng), dim(&mut rng));
    let out_shape: Vec<usize>;
    let mut mask = Tensor::scalar(0.0);
    let mut ids: Vec<usize> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut lstm: Option<(LstmLayer, LstmLayer)> = None;
    let mut new_shape: Vec<usize> = Vec::new();
    let mut axis = 0;
    let mut narrow_range = (0, 1);
    let drop_seed = rng.gen();

    match name {
        "matmul" => {
            params.insert("a", uniform(&mut rng, &[m, k]));
            params.insert("b", uniform(&mut rng, &[k, n]));
            out_shape = vec![m, n];
        }
        "bmm" => {
            params.insert("a", uniform(&mut rng, &[b, m, k]));
            params.insert("b", uniform(&mut rng, &[b, k, n]));
            out_shape = vec![b, m, n];
        }
        "transpose_last" => {
            params.insert("a", uniform(&mut rng, &[b, m, n]));
            out_shape = vec![b, n, m];
        }
        "reshape" => {
            params.insert("a", uniform(&mut rng, &[m, k * n]));
            new_shape = vec![m * k, n];
            out_shape = new_shape.clone();
        }
        "add" | "sub" | "mul" => {
            params.insert("a", uniform(&mut rng, &[m, n]));
            params.insert("b", uniform(&mut rng, &[n]));
            out_shape = vec![m, n];
        }
        "scale" | "tanh" | "sigmoid" => {
            params.insert("a", uniform(&mut rng, &[m, n]));
            out_shape = vec![m, n];
        }
        "abs" | "relu" => {
            params.insert("a", off_zero(&mut rng, &[m, n]));
            out_shape = vec![m, n];
        }
        "softmax" => {
            params.insert("a", uniform(&mut rng, &[b, m, n]));
            mask = random_mask(&mut rng, b, n).reshaped(vec![b, 1, n])?;
            out_shape = vec![b, m, n];
        }
        "concat" => {
            params.insert("a", uniform(&mut rng, &[m, k]));
            params.insert("b", uniform(&mut rng, &[m, n]));
            out_shape = vec![m, k + n];
        }
        "narrow" => {
            let total = k + n;
            params.insert("a", uniform(&mut rng, &[m, total]));
            narrow_range = (k, n);
            axis = 1;
            out_shape = vec![m, n];
        }
        "max_pool_time" => {
            // distinct values keep the argmax away from ties
            let t = m + 1;
            let mut vals: Vec<f64> = (0..b * t * n).map(|i| i as f64 * 0.1).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, rng.gen_range(0..=i));
            }
            params.insert("a", Tensor::new(vec![b, t, n], vals)?);
            mask = random_mask(&mut rng, b, t);
            out_shape = vec![b, n];
        }
        "mean_pool_time" => {
            params.insert("a", uniform(&mut rng, &[b, m, n]));
            mask = random_mask(&mut rng, b, m);
            out_shape = vec![b, n];
        }
        "sum_axis" => {
            params.insert("a", uniform(&mut rng, &[b, m, n]));
            axis = rng.gen_range(0..3);
            let mut s = vec![b, m, n];
            s.remove(axis);
            out_shape = s;
        }
        "sum" => {
            params.insert("a", uniform(&mut rng, &[m, n]));
            out_shape = vec![];
        }
        "embedding" => {
            let v = m + 2;
            params.insert("a", uniform(&mut rng, &[v, n]));
            ids = (0..b + 2).map(|_| rng.gen_range(0..v)).collect();
            out_shape = vec![ids.len(), n];
        }
        "cross_entropy" => {
            params.insert("a", uniform(&mut rng, &[b, 3]));
            labels = (0..b).map(|_| rng.gen_range(0..3)).collect();
            out_shape = vec![];
        }
        "dropout" => {
            params.insert("a", uniform(&mut rng, &[m, n]));
            out_shape = vec![m, n];
        }
        "lstm" => {
            let t = m + 1;
            params.insert("a", uniform(&mut rng, &[b, t, k]));
            let fwd = LstmLayer::new("fwd", k, n);
            let bwd = LstmLayer::new("bwd", k, n);
            fwd.init(&mut params, &mut rng);
            bwd.init(&mut params, &mut rng);
            mask = random_mask(&mut rng, b, t);
            lstm = Some((fwd, bwd));
            out_shape = vec![b, t, 2 * n];
        }
        other => return Err(Error::invalid(format!("unknown primitive `{other}`"))),
    }
    let weights = uniform(&mut rng, &out_shape);

    let loss_fn = |tape: &Tape, store: &ParamStore| -> Result<Var> {
        let a = tape.param(store, "a")?;
        let pb = || tape.param(store, "b");
        let out = match name {
            "matmul" => tape.matmul(a, pb()?)?,
            "bmm" => tape.bmm(a, pb()?)?,
            "transpose_last" => tape.transpose_last(a)?,
            "reshape" => tape.reshape(a, &new_shape)?,
            "add" => tape.add(a, pb()?)?,
            "sub" => tape.sub(a, pb()?)?,
            "mul" => tape.mul(a, pb()?)?,
            "scale" => tape.scale(a, -1.7)?,
            "abs" => tape.abs(a)?,
            "relu" => tape.relu(a)?,
            "tanh" => tape.tanh(a)?,
            "sigmoid" => tape.sigmoid(a)?,
            "softmax" => tape.softmax(a, Some(&mask))?,
            "concat" => tape.concat(&[a, pb()?], 1)?,
            "narrow" => tape.narrow(a, axis, narrow_range.0, narrow_range.1)?,
            "max_pool_time" => tape.max_pool_time(a, &mask)?,
            "mean_pool_time" => tape.mean_pool_time(a, &mask)?,
            "sum_axis" => tape.sum_axis(a, axis)?,
            "sum" => return tape.sum(a),
            "embedding" => tape.embedding(a, &ids)?,
            "cross_entropy" => return tape.cross_entropy(a, &labels),
            "dropout" => tape.dropout(a, 0.3, drop_seed)?,
            "lstm" => {
                let (f, bw) = lstm.as_ref().expect("lstm layers");
                let (fv, bv) = (f.bind(tape, store)?, bw.bind(tape, store)?);
                bilstm_encode(tape, a, &mask, &fv, &bv)?
            }
            _ => unreachable!("validated above"),
        };
        weighted_sum(tape, out, &weights)
    };
    grad_check(&params, loss_fn, STEP, tolerance)
}

const WORDS: &[&str] = &[
    "patient",
    "has",
    "no",
    "fever",
    "cough",
    "denies",
    "pneumonia",
    "lung",
    "diabetes",
    "the",
    "history",
    "of",
];

fn random_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.gen_range(1..=4);
    (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
}

/// Checks every parameter of a randomly initialized tiny model on a random
/// batch of 2 or 3 pairs.
pub fn model_grad_check(arch: Architecture, kb: bool, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::from_tokens(WORDS.iter().map(|w| w.to_string()));
    let spec = ModelSpec {
        architecture: arch,
        kb_attention: kb,
        embedding_dim: rng.gen_range(2..=3),
        hidden: rng.gen_range(2..=3),
        mlp: vec![rng.gen_range(2..=4)],
        trainable_embeddings: true,
        seed,
        ..Default::default()
    };
    let mut model = crate::models::NliModel::new(spec.clone(), vocab.clone(), None, &[DEFAULT_HEAD])?;
    jitter(&mut model.params, 0.3, seed ^ 0x5eed);
    let pairs: Vec<NliPair> = (0..rng.gen_range(2..=3))
        .map(|i| {
            let label = Label::ALL[rng.gen_range(0..3)];
            NliPair::new(format!("g{i}"), random_sentence(&mut rng), random_sentence(&mut rng), label)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&NliPair> = pairs.iter().collect();
    let batch = Batch::from_pairs(&refs, (0..pairs.len()).collect(), &vocab);
    let graph = ConceptGraph::demo();
    grad_check(
        &model.params,
        |tape, params| {
            let ctx = ForwardContext::eval(DEFAULT_HEAD, Some(&graph));
            let out = forward(&spec, tape, params, &batch, &ctx)?;
            tape.cross_entropy(out.logits, &batch.labels)
        },
        STEP,
        tolerance,
    )
}

/// Runs `instances` randomized checks of every primitive and every model
/// variant; instance `i` uses seed `seed + i`.
pub fn fidelity_suite(instances: usize, seed: u64, tolerance: f64) -> Result<Vec<FidelityCase>> {
    let mut cases = Vec::new();
    for i in 0..instances {
        let s = seed.wrapping_add(i as u64);
        for &p in PRIMITIVES {
            let r = primitive_grad_check(p, s, tolerance)?;
            cases.push(FidelityCase {
                target: p.to_string(),
                instance: i,
                max_rel_error: r.max_rel_error(),
                passed: r.passed(),
            });
        }
        for (arch, kb) in VARIANTS {
            let r = model_grad_check(arch, kb, s, tolerance)?;
            let spec = ModelSpec {
                architecture: arch,
                kb_attention: kb,
                ..Default::default()
            };
            cases.push(FidelityCase {
                target: spec.name(),
                instance: i,
                max_rel_error: r.max_rel_error(),
                passed: r.passed(),
            });
        }
    }
    Ok(cases)
}
