//! Reverse-mode automatic differentiation over dense `f64` tensors, plus the
//! recurrent cells and optimizer the NLI models are built from.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use lstm::{bilstm_encode, lstm_cell_step, lstm_run, LstmLayer, LstmVars};
pub use params::ParamStore;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
