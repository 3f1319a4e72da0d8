//! C ABI over the mednli workbench.
//!
//! Every fallible entry point returns an [`MnliStatus`]; on failure the
//! message is available from [`mnli_last_error`] on the same thread.
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use mednli::autodiff::checkpoint;
use mednli::data::{kappa_from_confusion, tokenize, Label, NliPair};
use mednli::harness::experiment::{CHECKPOINT_FILE, MANIFEST_FILE, TARGET_HEAD};
use mednli::harness::predict_pairs;
use mednli::models::{NliModel, DEFAULT_HEAD};
use mednli::ontology::{shortest_path_len, ConceptGraph};
use mednli::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnliStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    InvalidArgument = 6,
    UnknownConcept = 7,
    Numeric = 8,
    Panic = 9,
}

/// A trained neural model plus the ontology used by its attention layers.
pub struct MnliModel {
    model: NliModel,
    graph: ConceptGraph,
    head: String,
}

/// A loaded concept graph.
pub struct MnliGraph {
    graph: ConceptGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = clean);
}

struct Failure(MnliStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MnliStatus::Io,
            Error::Parse { .. } | Error::Json(_) => MnliStatus::Parse,
            Error::Config { .. } => MnliStatus::Config,
            Error::UnknownConcept(_) => MnliStatus::UnknownConcept,
            Error::NonFinite { .. } => MnliStatus::Numeric,
            _ => MnliStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(MnliStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(body: impl FnOnce() -> FfiResult<()>) -> MnliStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            MnliStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MnliStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MnliStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn to_path(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    text(p, what).map(PathBuf::from)
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn load_graph(p: Option<&Path>) -> FfiResult<ConceptGraph> {
    Ok(match p {
        Some(p) => ConceptGraph::load(p)?,
        None => ConceptGraph::demo(),
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mnli_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn mnli_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Name of label index 0, 1 or 2; null for any other index.
#[no_mangle]
pub extern "C" fn mnli_label_name(index: usize) -> *const c_char {
    match Label::from_index(index) {
        Some(Label::Entailment) => c"entailment".as_ptr(),
        Some(Label::Contradiction) => c"contradiction".as_ptr(),
        Some(Label::Neutral) => c"neutral".as_ptr(),
        None => ptr::null(),
    }
}

/// Opens the neural model saved in `run_dir`. `ontology` may be null to use
/// the bundled demo graph. The target head is used when present.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mnli_model_open(
    run_dir: *const c_char,
    ontology: *const c_char,
    out: *mut *mut MnliModel,
) -> MnliStatus {
    guard(|| {
        let dir = to_path(run_dir, "run_dir")?;
        let onto = if ontology.is_null() {
            None
        } else {
            Some(to_path(ontology, "ontology")?)
        };
        if out.is_null() {
            return Err(null("out"));
        }
        let model = NliModel::load(&dir.join(CHECKPOINT_FILE), &dir.join(MANIFEST_FILE))?;
        let head = if model.has_head(TARGET_HEAD) {
            TARGET_HEAD
        } else {
            DEFAULT_HEAD
        }
        .to_string();
        let graph = load_graph(onto.as_deref())?;
        let handle = Box::new(MnliModel { model, graph, head });
        write_out(out, Box::into_raw(handle), "out")
    })
}

/// Selects the output head used by [`mnli_model_predict`].
///
/// # Safety
/// `model` must come from [`mnli_model_open`]; `head` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mnli_model_set_head(model: *mut MnliModel, head: *const c_char) -> MnliStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let head = text(head, "head")?;
        if !m.model.has_head(head) {
            return Err(Failure(MnliStatus::InvalidArgument, format!("model has no head `{head}`")));
        }
        m.head = head.to_string();
        Ok(())
    })
}

/// Classifies one raw premise/hypothesis pair. Writes the three class
/// probabilities (entailment, contradiction, neutral) to `probs` and the
/// argmax label index to `label`; `label` may be null.
///
/// # Safety
/// `probs` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mnli_model_predict(
    model: *const MnliModel,
    premise: *const c_char,
    hypothesis: *const c_char,
    probs: *mut f64,
    label: *mut usize,
) -> MnliStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let premise = tokenize(text(premise, "premise")?);
        let hypothesis = tokenize(text(hypothesis, "hypothesis")?);
        if probs.is_null() {
            return Err(null("probs"));
        }
        let pair = NliPair::new("ffi", premise, hypothesis, Label::Neutral)?;
        let preds = predict_pairs(&m.model, &[pair], &m.head, Some(&m.graph), 1)?;
        let p = preds.first().ok_or_else(|| Failure(MnliStatus::InvalidArgument, "no prediction".into()))?;
        ptr::copy_nonoverlapping(p.probs.as_ptr(), probs, 3);
        if !label.is_null() {
            label.write(p.label().index());
        }
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`mnli_model_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mnli_model_free(model: *mut MnliModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a concept graph from a JSON ontology file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mnli_graph_open(path: *const c_char, out: *mut *mut MnliGraph) -> MnliStatus {
    guard(|| {
        let p = to_path(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let graph = load_graph(Some(&p))?;
        write_out(out, Box::into_raw(Box::new(MnliGraph { graph })), "out")
    })
}

/// The bundled demo ontology.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mnli_graph_demo(out: *mut *mut MnliGraph) -> MnliStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(
            out,
            Box::into_raw(Box::new(MnliGraph {
                graph: ConceptGraph::demo(),
            })),
            "out",
        )
    })
}

/// Number of concepts in the graph; 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mnli_graph_len(graph: *const MnliGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// Undirected shortest path length between two concept ids, or -1 when
/// they are not connected.
///
/// # Safety
/// Ids must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mnli_graph_distance(
    graph: *const MnliGraph,
    c1: *const c_char,
    c2: *const c_char,
    out: *mut i64,
) -> MnliStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let d = shortest_path_len(&g.graph, text(c1, "c1")?, text(c2, "c2")?)?;
        write_out(out, d.map_or(-1, |d| d as i64), "out")
    })
}

/// Releases a graph handle. Null is ignored.
///
/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mnli_graph_free(graph: *mut MnliGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Cohen's kappa of a `k` by `k` row-major confusion matrix of counts.
///
/// # Safety
/// `counts` must point to `k * k` readable values.
#[no_mangle]
pub unsafe extern "C" fn mnli_kappa(counts: *const u64, k: usize, out: *mut f64) -> MnliStatus {
    guard(|| {
        if counts.is_null() {
            return Err(null("counts"));
        }
        let flat = std::slice::from_raw_parts(counts, k * k);
        let table: Vec<Vec<u64>> = flat.chunks(k.max(1)).map(<[u64]>::to_vec).collect();
        write_out(out, kappa_from_confusion(&table)?, "out")
    })
}

/// Reads a checkpoint and reports its tensor count and total number of
/// stored values. Either output may be null.
///
/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mnli_checkpoint_inspect(path: *const c_char, tensors: *mut usize, values: *mut usize) -> MnliStatus {
    guard(|| {
        let store = checkpoint::load(&to_path(path, "path")?)?;
        if !tensors.is_null() {
            tensors.write(store.len());
        }
        if !values.is_null() {
            values.write(store.num_values());
        }
        Ok(())
    })
}

/// Runs the command-line front end with `argv[0..argc]` (program name
/// first) and returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mnli_cli_run(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    let status = guard(|| {
        if argv.is_null() && argc > 0 {
            return Err(null("argv"));
        }
        for i in 0..argc.max(0) as usize {
            args.push(text(*argv.add(i), "argv")?.to_string());
        }
        Ok(())
    });
    if status != MnliStatus::Ok {
        return mednli::cli::EXIT_CONFIG;
    }
    catch_unwind(|| mednli::cli::run(args)).unwrap_or(mednli::cli::EXIT_RUNTIME)
}

#[cfg(test)]
mod tests;
