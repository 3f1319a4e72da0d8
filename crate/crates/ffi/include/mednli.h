#ifndef MEDNLI_H
#define MEDNLI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum MnliStatus {
  MNLI_STATUS_OK = 0,
  MNLI_STATUS_NULL_POINTER = 1,
  MNLI_STATUS_INVALID_UTF8 = 2,
  MNLI_STATUS_IO = 3,
  MNLI_STATUS_PARSE = 4,
  MNLI_STATUS_CONFIG = 5,
  MNLI_STATUS_INVALID_ARGUMENT = 6,
  MNLI_STATUS_UNKNOWN_CONCEPT = 7,
  MNLI_STATUS_NUMERIC = 8,
  MNLI_STATUS_PANIC = 9,
} MnliStatus;

/*
 A loaded concept graph.
 */
typedef struct MnliGraph MnliGraph;

/*
 A trained neural model plus the ontology used by its attention layers.
 */
typedef struct MnliModel MnliModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mnli_version(void);

/*
 Message of the last failed call on this thread, or an empty string.
 The pointer stays valid until the next call into the library.
 */
const char *mnli_last_error(void);

/*
 Name of label index 0, 1 or 2; null for any other index.
 */
const char *mnli_label_name(size_t index);

/*
 Opens the neural model saved in `run_dir`. `ontology` may be null to use
 the bundled demo graph. The target head is used when present.

 # Safety
 String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum MnliStatus mnli_model_open(const char *run_dir, const char *ontology, struct MnliModel **out);

/*
 Selects the output head used by [`mnli_model_predict`].

 # Safety
 `model` must come from [`mnli_model_open`]; `head` must be NUL-terminated.
 */
enum MnliStatus mnli_model_set_head(struct MnliModel *model, const char *head);

/*
 Classifies one raw premise/hypothesis pair. Writes the three class
 probabilities (entailment, contradiction, neutral) to `probs` and the
 argmax label index to `label`; `label` may be null.

 # Safety
 `probs` must point to three writable doubles.
 */
enum MnliStatus mnli_model_predict(const struct MnliModel *model,
                                   const char *premise,
                                   const char *hypothesis,
                                   double *probs,
                                   size_t *label);

/*
 Releases a model handle. Null is ignored.

 # Safety
 `model` must come from [`mnli_model_open`] and not be used afterwards.
 */
void mnli_model_free(struct MnliModel *model);

/*
 Loads a concept graph from a JSON ontology file.

 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum MnliStatus mnli_graph_open(const char *path, struct MnliGraph **out);

/*
 The bundled demo ontology.

 # Safety
 `out` must be writable.
 */
enum MnliStatus mnli_graph_demo(struct MnliGraph **out);

/*
 Number of concepts in the graph; 0 for a null handle.

 # Safety
 `graph` must be null or a live handle.
 */
size_t mnli_graph_len(const struct MnliGraph *graph);

/*
 Undirected shortest path length between two concept ids, or -1 when
 they are not connected.

 # Safety
 Ids must be NUL-terminated; `out` must be writable.
 */
enum MnliStatus mnli_graph_distance(const struct MnliGraph *graph,
                                    const char *c1,
                                    const char *c2,
                                    int64_t *out);

/*
 Releases a graph handle. Null is ignored.

 # Safety
 `graph` must come from this library and not be used afterwards.
 */
void mnli_graph_free(struct MnliGraph *graph);

/*
 Cohen's kappa of a `k` by `k` row-major confusion matrix of counts.

 # Safety
 `counts` must point to `k * k` readable values.
 */
enum MnliStatus mnli_kappa(const uint64_t *counts, size_t k, double *out);

/*
 Reads a checkpoint and reports its tensor count and total number of
 stored values. Either output may be null.

 # Safety
 `path` must be NUL-terminated.
 */
enum MnliStatus mnli_checkpoint_inspect(const char *path, size_t *tensors, size_t *values);

/*
 Runs the command-line front end with `argv[0..argc]` (program name
 first) and returns its exit code.

 # Safety
 `argv` must hold `argc` NUL-terminated strings.
 */
int mnli_cli_run(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDNLI_H */
