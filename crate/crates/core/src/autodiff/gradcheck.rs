//! Central finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error `|a - n| / max(|a|, |n|, floor)`. The floor keeps
/// vanishing gradients from turning round-off into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares the analytic gradient of `loss_fn` with respect to every
/// parameter in `params` against `(f(w+h) - f(w-h)) / 2h`.
///
/// `loss_fn` must load parameters through [`Tape::param`] and return a
/// scalar; it is called `1 + 2 * params.num_values()` times.
pub fn grad_check<F>(params: &ParamStore, loss_fn: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &ParamStore) -> Result<Var>,
{
    let tape = Tape::new();
    let loss = loss_fn(&tape, params)?;
    tape.backward(loss)?;
    let analytic = tape.param_grads()?;

    let eval = |store: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let loss = loss_fn(&tape, store)?;
        Ok(tape.value(loss)?.data()[0])
    };

    let mut work = params.clone();
    let mut checks = Vec::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let Some(grad) = analytic.get(&name) else {
            continue;
        };
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for i in 0..grad.len() {
            let orig = work.get(&name)?.data()[i];
            work.get_mut(&name).expect("present").data_mut()[i] = orig + step;
            let up = eval(&work)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig - step;
            let down = eval(&work)?;
            work.get_mut(&name).expect("present").data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = grad.data()[i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        checks.push(ParamCheck {
            name,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance,
        step,
        params: checks,
    })
}
