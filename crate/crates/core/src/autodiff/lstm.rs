//! LSTM cells and masked (bi)directional sequence encoders.
//!
//! Gate layout inside the fused `[in, 4H]` / `[H, 4H]` weights is
//! input, forget, candidate, output.

use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameter names of one unidirectional LSTM.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

/// An LSTM layer bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        LstmLayer {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    /// Uniform `[-1/sqrt(H), 1/sqrt(H)]` weights, zero bias except the
    /// forget gate, which starts at 1.
    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let h = self.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        store.init_uniform(&format!("{}.w_ih", self.prefix), &[self.input, 4 * h], bound, rng);
        store.init_uniform(&format!("{}.w_hh", self.prefix), &[h, 4 * h], bound, rng);
        let mut bias = vec![0.0; 4 * h];
        bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        store.insert(format!("{}.bias", self.prefix), Tensor::new(vec![1, 4 * h], bias).expect("bias shape"));
    }

    pub fn bind(&self, tape: &Tape, store: &ParamStore) -> Result<LstmVars> {
        Ok(LstmVars {
            w_ih: tape.param(store, &format!("{}.w_ih", self.prefix))?,
            w_hh: tape.param(store, &format!("{}.w_hh", self.prefix))?,
            bias: tape.param(store, &format!("{}.bias", self.prefix))?,
            input: self.input,
            hidden: self.hidden,
        })
    }
}

/// One LSTM step on a batch: `x [B,in]`, `h_prev [B,H]`, `c_prev [B,H]`.
pub fn lstm_cell_step(tape: &Tape, x: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let (xs, hs, cs) = (tape.shape(x)?, tape.shape(h_prev)?, tape.shape(c_prev)?);
    let ok = xs.len() == 2 && xs[1] == p.input && hs == [xs[0], p.hidden] && cs == hs;
    if !ok {
        return Err(Error::Shape {
            op: "lstm_cell_step",
            shapes: vec![xs, hs, cs, vec![p.input, p.hidden]],
        });
    }
    let h = p.hidden;
    let gates = tape.add(tape.add(tape.matmul(x, p.w_ih)?, tape.matmul(h_prev, p.w_hh)?)?, p.bias)?;
    let i = tape.sigmoid(tape.narrow(gates, 1, 0, h)?)?;
    let f = tape.sigmoid(tape.narrow(gates, 1, h, h)?)?;
    let g = tape.tanh(tape.narrow(gates, 1, 2 * h, h)?)?;
    let o = tape.sigmoid(tape.narrow(gates, 1, 3 * h, h)?)?;
    let c = tape.add(tape.mul(f, c_prev)?, tape.mul(i, g)?)?;
    let h_new = tape.mul(o, tape.tanh(c)?)?;
    Ok((h_new, c))
}

/// Runs one direction over `x [B,T,E]`. Masked steps carry the previous
/// state forward and emit zeros, so padding anywhere in the sequence does
/// not change the states at valid positions.
pub fn lstm_run(tape: &Tape, x: Var, mask: &Tensor, p: &LstmVars, reverse: bool) -> Result<Var> {
    let shape = tape.shape(x)?;
    if shape.len() != 3 || mask.shape() != &shape[..2] || shape[2] != p.input {
        return Err(Error::Shape {
            op: "lstm_run",
            shapes: vec![shape, mask.shape().to_vec(), vec![p.input]],
        });
    }
    let (b, t, e) = (shape[0], shape[1], shape[2]);
    if t == 0 {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    let h = p.hidden;
    let mut h_state = tape.constant(Tensor::zeros(&[b, h]));
    let mut c_state = tape.constant(Tensor::zeros(&[b, h]));
    let zeros_out = tape.constant(Tensor::zeros(&[b, 1, h]));
    let mut outputs = vec![zeros_out; t];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..t).rev()) } else { Box::new(0..t) };
    for step in steps {
        let col: Vec<f64> = (0..b).map(|bi| mask.data()[bi * t + step]).collect();
        if col.iter().all(|&m| m == 0.0) {
            continue;
        }
        let x_t = tape.reshape(tape.narrow(x, 1, step, 1)?, &[b, e])?;
        let (h_new, c_new) = lstm_cell_step(tape, x_t, h_state, c_state, p)?;
        let out = if col.iter().all(|&m| m == 1.0) {
            h_state = h_new;
            c_state = c_new;
            h_new
        } else {
            let keep = tape.constant(Tensor::new(vec![b, 1], col.clone())?);
            let carry = tape.constant(Tensor::new(vec![b, 1], col.iter().map(|m| 1.0 - m).collect())?);
            h_state = tape.add(tape.mul(h_new, keep)?, tape.mul(h_state, carry)?)?;
            c_state = tape.add(tape.mul(c_new, keep)?, tape.mul(c_state, carry)?)?;
            tape.mul(h_state, keep)?
        };
        outputs[step] = tape.reshape(out, &[b, 1, h])?;
    }
    tape.concat(&outputs, 1)
}

/// Bidirectional encoding: output step `t` is `[forward_t ; backward_t]`,
/// shape `[B,T,2H]`.
pub fn bilstm_encode(tape: &Tape, x: Var, mask: &Tensor, fwd: &LstmVars, bwd: &LstmVars) -> Result<Var> {
    let f = lstm_run(tape, x, mask, fwd, false)?;
    let b = lstm_run(tape, x, mask, bwd, true)?;
    tape.concat(&[f, b], 2)
}
