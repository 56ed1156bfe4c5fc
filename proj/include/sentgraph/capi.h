#ifndef SENTGRAPH_CAPI_H
#define SENTGRAPH_CAPI_H

/* C interface to the sentiment-graph toolkit.
 *
 * Conventions:
 *   - Every fallible function returns an sg_status code; out-parameters are
 *     written only on SG_OK. sg_last_error() describes the most recent
 *     failure on the calling thread.
 *   - Returned char* buffers are owned by the caller; release them with
 *     sg_string_free(). Handles are released with their *_free function.
 *   - All text in and out is UTF-8. Structured results are JSON strings so
 *     the surface stays stable while the payloads can grow.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#ifdef SG_BUILD_SHARED
#define SG_API __declspec(dllexport)
#else
#define SG_API __declspec(dllimport)
#endif
#else
#define SG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sg_status {
  SG_OK = 0,
  SG_ERROR_INVALID_ARGUMENT = 1, /* null handle, unknown name, bad option value */
  SG_ERROR_PARSE = 2,            /* malformed dataset/dump/config/checkpoint input */
  SG_ERROR_CONVERSION = 3,       /* encode/decode/alignment failure */
  SG_ERROR_IO = 4,               /* unreadable or unwritable file */
  SG_ERROR_NUMERIC = 5,          /* training diverged */
  SG_ERROR_INTERNAL = 6
} sg_status;

/* Opaque handles. */
typedef struct sg_dataset sg_dataset;
typedef struct sg_model sg_model;

SG_API const char* sg_version(void);

/* Message for the last failing call on this thread ("" if none). The pointer
 * stays valid until the next failing call on the same thread. */
SG_API const char* sg_last_error(void);

SG_API void sg_string_free(char* s);

/* ---- datasets ------------------------------------------------------- */

SG_API sg_status sg_dataset_parse(const char* json_text, sg_dataset** out);
SG_API sg_status sg_dataset_read(const char* path, sg_dataset** out);
SG_API sg_status sg_dataset_to_json(const sg_dataset* d, char** json_out);
SG_API sg_status sg_dataset_write(const sg_dataset* d, const char* path);
SG_API size_t sg_dataset_size(const sg_dataset* d); /* 0 for NULL */
SG_API void sg_dataset_free(sg_dataset* d);

/* Counts (sentences, holders/targets/expressions, polarity breakdown) plus
 * per-role nesting statistics, as a JSON object. */
SG_API sg_status sg_dataset_stats_json(const sg_dataset* d, char** json_out);

/* ---- graph encodings -------------------------------------------------
 * encoding is one of "opinion-tuple", "node-centric", "labeled-edge". */

/* Encode every sentence; returns the plain-text graph dump (self-describing:
 * the dump records its encoding). */
SG_API sg_status sg_encode_graphs(const sg_dataset* d, const char* encoding, char** dump_out);

/* Parse a graph dump and decode it back to a dataset. stats_json_out
 * (optional, may be NULL) reports dropped_opinions. */
SG_API sg_status sg_decode_graphs(const char* dump_text, sg_dataset** out, char** stats_json_out);

/* decode(encode(d)) scored against d. encoding may also be "dep-head-first"
 * or "dep-head-final". Returns JSON: {"encoding", "sf1": {...}, "exact": bool}. */
SG_API sg_status sg_roundtrip_json(const sg_dataset* d, const char* encoding, char** json_out);

/* ---- dependency encoding ---------------------------------------------
 * head_rule is "first" or "last". */

/* Encode to the bi-lexical dependency representation. dump_out receives the
 * CoNLL-like text; loss_json_out (optional) the arc-loss statistics. */
SG_API sg_status sg_encode_dep(const sg_dataset* d, const char* head_rule, char** dump_out,
                               char** loss_json_out);

/* Parse a dependency dump and decode it back to a dataset. stats_json_out
 * (optional) reports dangling IN-arcs. */
SG_API sg_status sg_decode_dep(const char* dump_text, sg_dataset** out, char** stats_json_out);

/* ---- evaluation ------------------------------------------------------ */

/* Full metric report of pred against gold (SF1, NSF1, span F1 per role).
 * Either output may be NULL; text_out is the line-oriented human report,
 * json_out the machine-readable one. Misaligned inputs fail with
 * SG_ERROR_CONVERSION. */
SG_API sg_status sg_evaluate(const sg_dataset* gold, const sg_dataset* pred, char** text_out,
                             char** json_out);

/* Bootstrap comparison of system A against system B (multiple prediction
 * runs per system, usually five). Returns JSON with the observed SF1
 * difference, the joint p-value, the pairwise p-value matrix, the win count
 * and the decision string. Deterministic for a given seed regardless of
 * threads. */
SG_API sg_status sg_significance(const sg_dataset* gold, const sg_dataset* const* runs_a,
                                 size_t n_a, const sg_dataset* const* runs_b, size_t n_b,
                                 long long b_joint, long long b_pair, double alpha,
                                 int pair_wins_required, uint64_t seed, int threads,
                                 char** json_out);

/* ---- model ----------------------------------------------------------- */

/* Train from a flat "key = value" config text (later lines override earlier
 * ones, '#' comments). dev may be NULL; when given, model selection uses dev
 * SF1 instead of train SF1. on_epoch (optional) receives one JSON object per
 * epoch, e.g. for a metrics log. summary_json_out (optional) receives
 * {"epochs", "best_epoch", "best_sf1"}. */
SG_API sg_status sg_train(const char* config_text, const sg_dataset* train_set,
                          const sg_dataset* dev_set,
                          void (*on_epoch)(const char* epoch_json, void* user), void* user,
                          sg_model** out, char** summary_json_out);

SG_API sg_status sg_model_read(const char* path, sg_model** out);
SG_API sg_status sg_model_write(const sg_model* m, const char* path);

/* The model's configuration, serialized as config text. */
SG_API sg_status sg_model_config_text(const sg_model* m, char** text_out);

/* Total number of trainable scalars; 0 for NULL. */
SG_API uint64_t sg_model_parameter_count(const sg_model* m);

/* Predict opinions for every sentence of `input` (gold opinions in `input`
 * are ignored). stats_json_out (optional) reports sanitizer counters. */
SG_API sg_status sg_model_predict(const sg_model* m, const sg_dataset* input, sg_dataset** out,
                                  char** stats_json_out);

SG_API void sg_model_free(sg_model* m);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SENTGRAPH_CAPI_H */
