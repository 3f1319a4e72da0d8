//! Workbench for natural language inference on clinical text.
//!
//! The crate bundles a small reverse-mode autodiff engine, the corpus
//! tooling for building premise/hypothesis datasets from clinical notes,
//! word-embedding training and retrofitting, a concept-graph toolkit with
//! knowledge-directed attention, the BOW / InferSent / ESIM classifiers and
//! a feature-based gradient-boosting baseline, and the experiment harness
//! that trains, transfers, ensembles and reports on them.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod harness;
pub mod models;
pub mod ontology;

pub use error::{Error, Result};
