//! Tape-based reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly, appends a node holding its output and
//! the indices of its inputs, and returns a [`Var`] handle. Nodes are stored
//! in execution order, so the tape is topologically sorted by construction
//! and [`Tape::backward`] only has to walk it in reverse.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tensor::{broadcast_index_map, broadcast_shape, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    BatchMatMul(usize, usize),
    TransposeLast(usize),
    Reshape(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Abs(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Narrow { input: usize, axis: usize, start: usize },
    MaxPool { input: usize, argmax: Vec<Option<usize>> },
    MeanPool { input: usize, weights: Vec<f64> },
    SumAxis { input: usize, axis: usize },
    SumAll(usize),
    Embedding { table: usize, ids: Vec<usize> },
    CrossEntropy { logits: usize, labels: Vec<usize> },
    Dropout { input: usize, keep: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of executed primitives.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<String, usize>>,
    grads: RefCell<Option<Vec<Option<Vec<f64>>>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> Error {
    Error::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

/// (outer, axis, inner) sizes around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(BTreeMap::new()),
            grads: RefCell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.borrow().len() {
            return Err(Error::ForeignTensor);
        }
        Ok(v.id)
    }

    fn push(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|&i| nodes[i].requires_grad);
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var { id, tape: self.id }
    }

    /// Records a leaf that receives gradients.
    pub fn variable(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var { id, tape: self.id }
    }

    /// Loads a named parameter as a gradient-carrying leaf. Repeated calls
    /// with the same name return the same handle.
    pub fn param(&self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&id) = self.params.borrow().get(name) {
            return Ok(Var { id, tape: self.id });
        }
        let v = self.variable(store.get(name)?.clone());
        self.params.borrow_mut().insert(name.to_string(), v.id);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> Result<Tensor> {
        let i = self.index(v)?;
        Ok(self.nodes.borrow()[i].value.clone())
    }

    pub fn shape(&self, v: Var) -> Result<Vec<usize>> {
        let i = self.index(v)?;
        Ok(self.nodes.borrow()[i].value.shape().to_vec())
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        let i = self.index(v)?;
        Ok(self.nodes.borrow()[i].requires_grad)
    }

    // ---- forward primitives ----

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[ia].value, &nodes[ib].value);
            if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
                return Err(shape_err("matmul", &[x.shape(), y.shape()]));
            }
            let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
            let mut out = vec![0.0; m * n];
            matmul_into(x.data(), y.data(), &mut out, m, k, n);
            Tensor::new(vec![m, n], out)?
        };
        Ok(self.push(out, Op::MatMul(ia, ib), &[ia, ib]))
    }

    /// Batched matrix product `[B,M,K] x [B,K,N] -> [B,M,N]`.
    pub fn bmm(&self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[ia].value, &nodes[ib].value);
            if x.rank() != 3 || y.rank() != 3 || x.shape()[0] != y.shape()[0] || x.shape()[2] != y.shape()[1] {
                return Err(shape_err("bmm", &[x.shape(), y.shape()]));
            }
            let (bt, m, k, n) = (x.shape()[0], x.shape()[1], x.shape()[2], y.shape()[2]);
            let mut out = vec![0.0; bt * m * n];
            for b in 0..bt {
                matmul_into(
                    &x.data()[b * m * k..(b + 1) * m * k],
                    &y.data()[b * k * n..(b + 1) * k * n],
                    &mut out[b * m * n..(b + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            Tensor::new(vec![bt, m, n], out)?
        };
        Ok(self.push(out, Op::BatchMatMul(ia, ib), &[ia, ib]))
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose_last(&self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            if x.rank() < 2 || x.rank() > 3 {
                return Err(shape_err("transpose_last", &[x.shape()]));
            }
            transpose_last(x)
        };
        Ok(self.push(out, Op::TransposeLast(ia), &[ia]))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            if shape.iter().product::<usize>() != x.len() {
                return Err(shape_err("reshape", &[x.shape(), shape]));
            }
            Tensor::new(shape.to_vec(), x.data().to_vec())?
        };
        Ok(self.push(out, Op::Reshape(ia), &[ia]))
    }

    fn binary(&self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, usize, usize)> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let nodes = self.nodes.borrow();
        let (x, y) = (&nodes[ia].value, &nodes[ib].value);
        let out_shape = broadcast_shape(x.shape(), y.shape()).ok_or_else(|| shape_err(name, &[x.shape(), y.shape()]))?;
        let data = if x.shape() == y.shape() {
            x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect()
        } else {
            let ma = broadcast_index_map(x.shape(), &out_shape);
            let mb = broadcast_index_map(y.shape(), &out_shape);
            ma.iter().zip(&mb).map(|(&i, &j)| f(x.data()[i], y.data()[j])).collect()
        };
        Ok((Tensor::new(out_shape, data)?, ia, ib))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (out, ia, ib) = self.binary("add", a, b, |p, q| p + q)?;
        Ok(self.push(out, Op::Add(ia, ib), &[ia, ib]))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (out, ia, ib) = self.binary("sub", a, b, |p, q| p - q)?;
        Ok(self.push(out, Op::Sub(ia, ib), &[ia, ib]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (out, ia, ib) = self.binary("mul", a, b, |p, q| p * q)?;
        Ok(self.push(out, Op::Mul(ia, ib), &[ia, ib]))
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(0, c), |x| x * c)
    }

    fn unary(&self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())?
        };
        let op = match op {
            Op::Scale(_, c) => Op::Scale(ia, c),
            Op::Abs(_) => Op::Abs(ia),
            Op::Relu(_) => Op::Relu(ia),
            Op::Tanh(_) => Op::Tanh(ia),
            Op::Sigmoid(_) => Op::Sigmoid(ia),
            other => other,
        };
        Ok(self.push(out, op, &[ia]))
    }

    pub fn abs(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Abs(0), f64::abs)
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(0), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(0), f64::tanh)
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(0), sigmoid)
    }

    /// Softmax over the last axis. `mask` must broadcast to the input and
    /// hold only 0/1; masked positions receive exactly zero probability and
    /// a fully masked row is all zeros.
    pub fn softmax(&self, a: Var, mask: Option<&Tensor>) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            if x.rank() == 0 {
                return Err(shape_err("softmax", &[x.shape()]));
            }
            let valid = match mask {
                None => vec![true; x.len()],
                Some(m) => expand_mask("softmax", m, x.shape())?,
            };
            let cols = *x.shape().last().unwrap();
            let mut out = vec![0.0; x.len()];
            if cols > 0 {
                for r in 0..x.len() / cols {
                    let row = &x.data()[r * cols..(r + 1) * cols];
                    let ok = &valid[r * cols..(r + 1) * cols];
                    let max = row.iter().zip(ok).filter(|(_, &k)| k).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        continue;
                    }
                    let dst = &mut out[r * cols..(r + 1) * cols];
                    let mut total = 0.0;
                    for j in 0..cols {
                        if ok[j] {
                            dst[j] = (row[j] - max).exp();
                            total += dst[j];
                        }
                    }
                    for v in dst.iter_mut() {
                        *v /= total;
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), out)?
        };
        Ok(self.push(out, Op::Softmax(ia), &[ia]))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let ids = parts.iter().map(|&p| self.index(p)).collect::<Result<Vec<_>>>()?;
        let out = {
            let nodes = self.nodes.borrow();
            let shapes: Vec<&[usize]> = ids.iter().map(|&i| nodes[i].value.shape()).collect();
            let first = *shapes.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
            let compatible = axis < first.len()
                && shapes
                    .iter()
                    .all(|s| s.len() == first.len() && s.iter().enumerate().all(|(d, &n)| d == axis || n == first[d]));
            if !compatible {
                return Err(shape_err("concat", &shapes));
            }
            let mut out_shape = first.to_vec();
            out_shape[axis] = shapes.iter().map(|s| s[axis]).sum();
            let (outer, _, inner) = split_at_axis(first, axis);
            let mut data = Vec::with_capacity(out_shape.iter().product());
            for o in 0..outer {
                for &i in &ids {
                    let x = &nodes[i].value;
                    let chunk = x.shape()[axis] * inner;
                    data.extend_from_slice(&x.data()[o * chunk..(o + 1) * chunk]);
                }
            }
            Tensor::new(out_shape, data)?
        };
        Ok(self.push(
            out,
            Op::Concat {
                inputs: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            if axis >= x.rank() || start + len > x.shape()[axis] {
                return Err(shape_err("narrow", &[x.shape(), &[axis, start, len]]));
            }
            let (outer, n, inner) = split_at_axis(x.shape(), axis);
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                data.extend_from_slice(&x.data()[base..base + len * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[axis] = len;
            Tensor::new(shape, data)?
        };
        Ok(self.push(out, Op::Narrow { input: ia, axis, start }, &[ia]))
    }

    /// Max over the time axis of `[B,T,D]` restricted to positions where
    /// `mask` (`[B,T]`, 0/1) is set. Rows with no valid position yield zeros.
    pub fn max_pool_time(&self, a: Var, mask: &Tensor) -> Result<Var> {
        let ia = self.index(a)?;
        let (out, argmax) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            let (b, t, d) = pool_dims("max_pool_time", x, mask)?;
            let mut out = vec![0.0; b * d];
            let mut argmax = vec![None; b * d];
            for bi in 0..b {
                for ti in 0..t {
                    if mask.data()[bi * t + ti] == 0.0 {
                        continue;
                    }
                    for di in 0..d {
                        let idx = (bi * t + ti) * d + di;
                        let slot = bi * d + di;
                        if argmax[slot].is_none() || x.data()[idx] > out[slot] {
                            out[slot] = x.data()[idx];
                            argmax[slot] = Some(idx);
                        }
                    }
                }
            }
            (Tensor::new(vec![b, d], out)?, argmax)
        };
        Ok(self.push(out, Op::MaxPool { input: ia, argmax }, &[ia]))
    }

    /// Mean over valid time steps of `[B,T,D]`; all-masked rows yield zeros.
    pub fn mean_pool_time(&self, a: Var, mask: &Tensor) -> Result<Var> {
        let ia = self.index(a)?;
        let (out, weights) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            let (b, t, d) = pool_dims("mean_pool_time", x, mask)?;
            let mut weights = vec![0.0; b * t];
            for bi in 0..b {
                let count: f64 = mask.data()[bi * t..(bi + 1) * t].iter().sum();
                if count > 0.0 {
                    for ti in 0..t {
                        weights[bi * t + ti] = mask.data()[bi * t + ti] / count;
                    }
                }
            }
            let mut out = vec![0.0; b * d];
            for bi in 0..b {
                for ti in 0..t {
                    let w = weights[bi * t + ti];
                    if w == 0.0 {
                        continue;
                    }
                    for di in 0..d {
                        out[bi * d + di] += w * x.data()[(bi * t + ti) * d + di];
                    }
                }
            }
            (Tensor::new(vec![b, d], out)?, weights)
        };
        Ok(self.push(out, Op::MeanPool { input: ia, weights }, &[ia]))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Result<Var> {
        let ia = self.index(a)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            if axis >= x.rank() {
                return Err(shape_err("sum_axis", &[x.shape(), &[axis]]));
            }
            let (outer, n, inner) = split_at_axis(x.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..n {
                    for i in 0..inner {
                        out[o * inner + i] += x.data()[(o * n + k) * inner + i];
                    }
                }
            }
            let mut shape = x.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, out)?
        };
        Ok(self.push(out, Op::SumAxis { input: ia, axis }, &[ia]))
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let total = self.nodes.borrow()[ia].value.data().iter().sum();
        Ok(self.push(Tensor::scalar(total), Op::SumAll(ia), &[ia]))
    }

    /// Gathers rows of a `[V,D]` table into `[ids.len(), D]`.
    pub fn embedding(&self, table: Var, ids: &[usize]) -> Result<Var> {
        let it = self.index(table)?;
        let out = {
            let nodes = self.nodes.borrow();
            let x = &nodes[it].value;
            if x.rank() != 2 || ids.iter().any(|&i| i >= x.shape()[0]) {
                return Err(shape_err("embedding", &[x.shape(), &[ids.iter().copied().max().unwrap_or(0)]]));
            }
            let d = x.shape()[1];
            let mut data = Vec::with_capacity(ids.len() * d);
            for &i in ids {
                data.extend_from_slice(x.row(i));
            }
            Tensor::new(vec![ids.len(), d], data)?
        };
        Ok(self.push(
            out,
            Op::Embedding {
                table: it,
                ids: ids.to_vec(),
            },
            &[it],
        ))
    }

    /// Mean softmax cross-entropy of `[B,C]` logits against class indices.
    pub fn cross_entropy(&self, logits: Var, labels: &[usize]) -> Result<Var> {
        let il = self.index(logits)?;
        let loss = {
            let nodes = self.nodes.borrow();
            let x = &nodes[il].value;
            if x.rank() != 2 || x.shape()[0] != labels.len() || labels.iter().any(|&l| l >= x.shape()[1]) {
                return Err(shape_err("cross_entropy", &[x.shape(), &[labels.len()]]));
            }
            let c = x.shape()[1];
            let mut total = 0.0;
            for (r, &label) in labels.iter().enumerate() {
                let row = &x.data()[r * c..(r + 1) * c];
                total += log_sum_exp(row) - row[label];
            }
            total / labels.len() as f64
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                labels: labels.to_vec(),
            },
            &[il],
        ))
    }

    /// Inverted dropout with a mask drawn from `seed`; `rate == 0` is the identity.
    pub fn dropout(&self, a: Var, rate: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let ia = self.index(a)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, keep) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[ia].value;
            let keep: Vec<f64> = (0..x.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) }).collect();
            let data = x.data().iter().zip(&keep).map(|(v, k)| v * k).collect();
            (Tensor::new(x.shape().to_vec(), data)?, keep)
        };
        Ok(self.push(out, Op::Dropout { input: ia, keep }, &[ia]))
    }

    // ---- reverse pass ----

    /// Populates gradients of `loss` with respect to every node that
    /// requires them. Replaces the gradients of any earlier call.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let il = self.index(loss)?;
        let nodes = self.nodes.borrow();
        if nodes[il].value.len() != 1 {
            return Err(Error::NonScalarLoss(nodes[il].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[il] = Some(vec![1.0]);
        for id in (0..=il).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        *self.grads.borrow_mut() = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward loss with respect to `v`; zeros when
    /// no gradient reached it.
    pub fn grad(&self, v: Var) -> Result<Tensor> {
        let i = self.index(v)?;
        let shape = self.nodes.borrow()[i].value.shape().to_vec();
        let grads = self.grads.borrow();
        let g = grads.as_ref().and_then(|g| g[i].clone()).unwrap_or_else(|| vec![0.0; shape.iter().product()]);
        Tensor::new(shape, g)
    }

    /// Gradients of every parameter loaded through [`Tape::param`].
    pub fn param_grads(&self) -> Result<BTreeMap<String, Tensor>> {
        let params = self.params.borrow();
        params.iter().map(|(name, &id)| Ok((name.clone(), self.grad(Var { id, tape: self.id })?))).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let dst = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let src = &b[p * n..(p + 1) * n];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += av * s;
            }
        }
    }
}

fn transpose_last(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (batch, r, c) = if s.len() == 3 { (s[0], s[1], s[2]) } else { (1, s[0], s[1]) };
    let mut data = vec![0.0; x.len()];
    for b in 0..batch {
        for i in 0..r {
            for j in 0..c {
                data[b * r * c + j * r + i] = x.data()[b * r * c + i * c + j];
            }
        }
    }
    let mut shape = s.to_vec();
    let n = shape.len();
    shape.swap(n - 1, n - 2);
    Tensor::new(shape, data).expect("transpose preserves size")
}

fn expand_mask(op: &'static str, mask: &Tensor, shape: &[usize]) -> Result<Vec<bool>> {
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("{op}: mask must hold only 0 and 1")));
    }
    match broadcast_shape(mask.shape(), shape) {
        Some(s) if s == shape => {}
        _ => return Err(shape_err(op, &[shape, mask.shape()])),
    }
    Ok(broadcast_index_map(mask.shape(), shape).into_iter().map(|i| mask.data()[i] != 0.0).collect())
}

fn pool_dims(op: &'static str, x: &Tensor, mask: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() != 3 || mask.shape() != &x.shape()[..2] {
        return Err(shape_err(op, &[x.shape(), mask.shape()]));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("{op}: mask must hold only 0 and 1")));
    }
    Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: usize, contrib: Vec<f64>) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contrib) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

/// Gradient of a broadcast operand: sum the output gradient over stretched axes.
fn reduce_broadcast(g: &[f64], weights: impl Fn(usize) -> f64, src: &Tensor, out_shape: &[usize]) -> Vec<f64> {
    if src.shape() == out_shape {
        return g.iter().enumerate().map(|(i, &v)| v * weights(i)).collect();
    }
    let map = broadcast_index_map(src.shape(), out_shape);
    let mut acc = vec![0.0; src.len()];
    for (o, &s) in map.iter().enumerate() {
        acc[s] += g[o] * weights(o);
    }
    acc
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    let wants = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (x, y) = (&nodes[a].value, &nodes[b].value);
            let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
            if wants(a) {
                let mut ga = vec![0.0; m * k];
                matmul_a_bt(g, y.data(), &mut ga, m, n, k);
                accumulate(grads, a, ga);
            }
            if wants(b) {
                let mut gb = vec![0.0; k * n];
                matmul_at_b(x.data(), g, &mut gb, m, k, n);
                accumulate(grads, b, gb);
            }
        }
        &Op::BatchMatMul(a, b) => {
            let (x, y) = (&nodes[a].value, &nodes[b].value);
            let (bt, m, k, n) = (x.shape()[0], x.shape()[1], x.shape()[2], y.shape()[2]);
            if wants(a) {
                let mut ga = vec![0.0; bt * m * k];
                for i in 0..bt {
                    matmul_a_bt(
                        &g[i * m * n..(i + 1) * m * n],
                        &y.data()[i * k * n..(i + 1) * k * n],
                        &mut ga[i * m * k..(i + 1) * m * k],
                        m,
                        n,
                        k,
                    );
                }
                accumulate(grads, a, ga);
            }
            if wants(b) {
                let mut gb = vec![0.0; bt * k * n];
                for i in 0..bt {
                    matmul_at_b(
                        &x.data()[i * m * k..(i + 1) * m * k],
                        &g[i * m * n..(i + 1) * m * n],
                        &mut gb[i * k * n..(i + 1) * k * n],
                        m,
                        k,
                        n,
                    );
                }
                accumulate(grads, b, gb);
            }
        }
        &Op::TransposeLast(a) => {
            if wants(a) {
                let gt = transpose_last(&Tensor::new(out.shape().to_vec(), g.to_vec()).expect("grad shape"));
                accumulate(grads, a, gt.into_data());
            }
        }
        &Op::Reshape(a) => {
            if wants(a) {
                accumulate(grads, a, g.to_vec());
            }
        }
        &Op::Add(a, b) => {
            if wants(a) {
                accumulate(grads, a, reduce_broadcast(g, |_| 1.0, &nodes[a].value, out.shape()));
            }
            if wants(b) {
                accumulate(grads, b, reduce_broadcast(g, |_| 1.0, &nodes[b].value, out.shape()));
            }
        }
        &Op::Sub(a, b) => {
            if wants(a) {
                accumulate(grads, a, reduce_broadcast(g, |_| 1.0, &nodes[a].value, out.shape()));
            }
            if wants(b) {
                accumulate(grads, b, reduce_broadcast(g, |_| -1.0, &nodes[b].value, out.shape()));
            }
        }
        &Op::Mul(a, b) => {
            let (x, y) = (&nodes[a].value, &nodes[b].value);
            let mx = broadcast_index_map(x.shape(), out.shape());
            let my = broadcast_index_map(y.shape(), out.shape());
            if wants(a) {
                accumulate(grads, a, reduce_broadcast(g, |o| y.data()[my[o]], x, out.shape()));
            }
            if wants(b) {
                accumulate(grads, b, reduce_broadcast(g, |o| x.data()[mx[o]], y, out.shape()));
            }
        }
        &Op::Scale(a, c) => accumulate(grads, a, g.iter().map(|v| v * c).collect()),
        &Op::Abs(a) => {
            let x = nodes[a].value.data();
            let ga = g
                .iter()
                .zip(x)
                .map(|(gv, &xv)| {
                    if xv > 0.0 {
                        *gv
                    } else if xv < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                })
                .collect();
            accumulate(grads, a, ga);
        }
        &Op::Relu(a) => {
            let x = nodes[a].value.data();
            let ga = g.iter().zip(x).map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 }).collect();
            accumulate(grads, a, ga);
        }
        &Op::Tanh(a) => {
            let ga = g.iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect();
            accumulate(grads, a, ga);
        }
        &Op::Sigmoid(a) => {
            let ga = g.iter().zip(out.data()).map(|(gv, y)| gv * y * (1.0 - y)).collect();
            accumulate(grads, a, ga);
        }
        &Op::Softmax(a) => {
            let cols = *out.shape().last().unwrap();
            let mut ga = vec![0.0; out.len()];
            if cols > 0 {
                for r in 0..out.len() / cols {
                    let y = &out.data()[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..cols {
                        ga[r * cols + j] = y[j] * (gr[j] - dot);
                    }
                }
            }
            accumulate(grads, a, ga);
        }
        Op::Concat { inputs, axis } => {
            let (outer, _, inner) = split_at_axis(out.shape(), *axis);
            let total = out.shape()[*axis] * inner;
            let mut offset = 0;
            for &i in inputs {
                let chunk = nodes[i].value.shape()[*axis] * inner;
                if wants(i) {
                    let mut gi = Vec::with_capacity(outer * chunk);
                    for o in 0..outer {
                        gi.extend_from_slice(&g[o * total + offset..o * total + offset + chunk]);
                    }
                    accumulate(grads, i, gi);
                }
                offset += chunk;
            }
        }
        &Op::Narrow { input, axis, start } => {
            let src = &nodes[input].value;
            let (outer, n, inner) = split_at_axis(src.shape(), axis);
            let len = out.shape()[axis];
            let mut gi = vec![0.0; src.len()];
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                gi[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            accumulate(grads, input, gi);
        }
        Op::MaxPool { input, argmax } => {
            let mut gi = vec![0.0; nodes[*input].value.len()];
            for (slot, am) in argmax.iter().enumerate() {
                if let Some(idx) = am {
                    gi[*idx] += g[slot];
                }
            }
            accumulate(grads, *input, gi);
        }
        Op::MeanPool { input, weights } => {
            let s = nodes[*input].value.shape();
            let (b, t, d) = (s[0], s[1], s[2]);
            let mut gi = vec![0.0; b * t * d];
            for bi in 0..b {
                for ti in 0..t {
                    let w = weights[bi * t + ti];
                    for di in 0..d {
                        gi[(bi * t + ti) * d + di] = w * g[bi * d + di];
                    }
                }
            }
            accumulate(grads, *input, gi);
        }
        &Op::SumAxis { input, axis } => {
            let (outer, n, inner) = split_at_axis(nodes[input].value.shape(), axis);
            let mut gi = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    for i in 0..inner {
                        gi[(o * n + k) * inner + i] = g[o * inner + i];
                    }
                }
            }
            accumulate(grads, input, gi);
        }
        &Op::SumAll(a) => accumulate(grads, a, vec![g[0]; nodes[a].value.len()]),
        Op::Embedding { table, ids } => {
            let t = &nodes[*table].value;
            let d = t.shape()[1];
            let mut gt = vec![0.0; t.len()];
            for (r, &i) in ids.iter().enumerate() {
                for k in 0..d {
                    gt[i * d + k] += g[r * d + k];
                }
            }
            accumulate(grads, *table, gt);
        }
        Op::CrossEntropy { logits, labels } => {
            let x = &nodes[*logits].value;
            let c = x.shape()[1];
            let n = labels.len() as f64;
            let mut gl = vec![0.0; x.len()];
            for (r, &label) in labels.iter().enumerate() {
                let row = &x.data()[r * c..(r + 1) * c];
                let lse = log_sum_exp(row);
                for j in 0..c {
                    let p = (row[j] - lse).exp();
                    let target = if j == label { 1.0 } else { 0.0 };
                    gl[r * c + j] = g[0] * (p - target) / n;
                }
            }
            accumulate(grads, *logits, gl);
        }
        Op::Dropout { input, keep } => {
            accumulate(grads, *input, g.iter().zip(keep).map(|(a, b)| a * b).collect());
        }
    }
}

/// `out[m,k] += a[m,n] * b[k,n]^T`
fn matmul_a_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let ar = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let br = &b[p * n..(p + 1) * n];
            out[i * k + p] += ar.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k,n] += a[m,k]^T * g[m,n]`
fn matmul_at_b(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gr = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let dst = &mut out[p * n..(p + 1) * n];
            for (d, &gv) in dst.iter_mut().zip(gr) {
                *d += av * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let tape = Tape::new();
        let x = tape.constant(t(&[3], &[0.0, 0.0, 0.0]));
        let y = tape.value(tape.softmax(x, None).unwrap()).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let tape = Tape::new();
        let x = tape.constant(t(&[3], &[-2.0, 0.0, 3.0]));
        assert_eq!(tape.value(tape.relu(x).unwrap()).unwrap().data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn matmul_with_identity_is_exact() {
        let tape = Tape::new();
        let a = t(&[2, 3], &[0.1, -2.5, 3.7, 1e-9, 4.0, -0.3]);
        let av = tape.constant(a.clone());
        let id = tape.constant(Tensor::identity(3));
        assert_eq!(tape.value(tape.matmul(av, id).unwrap()).unwrap(), a);
    }

    #[test]
    fn masked_softmax_puts_all_mass_on_valid() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2], &[1.0, 1.0]));
        let y = tape.softmax(x, Some(&t(&[2], &[1.0, 0.0]))).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn fully_masked_row_is_zero() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = tape.softmax(x, Some(&t(&[2, 1], &[1.0, 0.0]))).unwrap();
        let v = tape.value(y).unwrap();
        assert_eq!(&v.data()[2..], &[0.0, 0.0]);
        assert!((v.data()[0] + v.data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.variable(Tensor::scalar(2.0));
        let y = tape.variable(Tensor::scalar(3.0));
        let f = tape.mul(x, y).unwrap();
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), Some(3.0));
        assert_eq!(tape.grad(y).unwrap().item(), Some(2.0));
    }

    #[test]
    fn inactive_relu_has_zero_grad() {
        let tape = Tape::new();
        let x = tape.variable(Tensor::scalar(1.0));
        let f = tape.relu(tape.scale(x, -1.0).unwrap()).unwrap();
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), Some(0.0));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.variable(Tensor::scalar(3.0));
        let f = tape.add(tape.mul(x, x).unwrap(), x).unwrap();
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), Some(7.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.variable(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn foreign_var_is_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.variable(Tensor::scalar(1.0));
        assert!(matches!(b.relu(x), Err(Error::ForeignTensor)));
        assert!(matches!(b.backward(x), Err(Error::ForeignTensor)));
    }

    #[test]
    fn shape_error_names_primitive() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        assert!(err.to_string().contains("[2, 3]"), "{err}");
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let tape = Tape::new();
        let a = tape.constant(t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1, 2], &[5.0, 6.0, 7.0, 8.0]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c).unwrap(), vec![2, 2, 2]);
        assert_eq!(tape.value(c).unwrap().data(), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        let back = tape.narrow(c, 1, 1, 1).unwrap();
        assert_eq!(tape.value(back).unwrap(), tape.value(b).unwrap());
    }

    #[test]
    fn pooling_ignores_masked_positions() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 3, 1], &[1.0, 3.0, 100.0]));
        let mask = t(&[1, 3], &[1.0, 1.0, 0.0]);
        assert_eq!(tape.value(tape.max_pool_time(x, &mask).unwrap()).unwrap().data(), &[3.0]);
        assert_eq!(tape.value(tape.mean_pool_time(x, &mask).unwrap()).unwrap().data(), &[2.0]);
    }

    #[test]
    fn non_boolean_mask_is_rejected() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2], &[1.0, 1.0]));
        assert!(tape.softmax(x, Some(&t(&[2], &[0.5, 1.0]))).is_err());
    }

    #[test]
    fn dropout_is_seeded() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[64], 1.0));
        let a = tape.value(tape.dropout(x, 0.5, 9).unwrap()).unwrap();
        let b = tape.value(tape.dropout(x, 0.5, 9).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| v == 0.0));
        assert_eq!(tape.dropout(x, 0.0, 1).unwrap(), x);
    }
}
