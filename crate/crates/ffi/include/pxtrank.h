#ifndef PXTRANK_H
#define PXTRANK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Number of numeric features per provider.
#define PXT_NUMERIC_FEATURES 8

typedef enum PxtStatus {
  PXT_STATUS_OK = 0,
  PXT_STATUS_NULL_POINTER = 1,
  PXT_STATUS_INVALID_ARGUMENT = 2,
  PXT_STATUS_IO = 3,
  PXT_STATUS_DATA = 4,
  PXT_STATUS_RUNTIME = 5,
  PXT_STATUS_NOT_FOUND = 6,
  PXT_STATUS_PANIC = 7,
} PxtStatus;

// A loaded ranker checkpoint.
typedef struct PxtModel PxtModel;

// Normalized provider-topic scores keyed by (topic, provider, locale).
typedef struct PxtSignalTable PxtSignalTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *pxt_last_error(void);

// NDCG@k of `n` relevance grades given in ranked order.
//
// # Safety
// `relevances` must point at `n` doubles and `out` at one writable double.
enum PxtStatus pxt_ndcg_at_k(const double *relevances, uintptr_t n, uintptr_t k, double *out);

// Kendall's tau between two orderings of the same `n` ids.
//
// # Safety
// `a` and `b` must each point at `n` ids; `out` at one writable double.
enum PxtStatus pxt_kendall_tau_u32(const uint32_t *a, const uint32_t *b, uintptr_t n, double *out);

// Weak linear score of one provider's `PXT_NUMERIC_FEATURES` normalized
// features. `weights` may be null for the default profile.
//
// # Safety
// `features` (and `weights` unless null) must point at
// `PXT_NUMERIC_FEATURES` doubles; `out` at one writable double.
enum PxtStatus pxt_weak_score(const double *features, const double *weights, double *out);

// Loads a checkpoint file into a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum PxtStatus pxt_model_load(const char *path, struct PxtModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must come from `pxt_model_load` and not be used afterwards.
void pxt_model_free(struct PxtModel *model);

// Embedding width the model expects.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum PxtStatus pxt_model_embedding_dim(const struct PxtModel *model, uintptr_t *out);

// Scores one slate of `n` providers. Inputs are row-major: `mission` and
// `topic` are `n x dim`, `numeric` is `n x PXT_NUMERIC_FEATURES`. Writes
// `n` scores to `scores`.
//
// # Safety
// All pointers must reference buffers of the sizes above.
enum PxtStatus pxt_model_score(const struct PxtModel *model,
                               uintptr_t n,
                               uintptr_t dim,
                               const double *mission,
                               const double *topic,
                               const double *numeric,
                               double *scores);

// Loads a JSONL file of `{topic, provider, locale, score}` entries.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum PxtStatus pxt_signal_table_load(const char *path, struct PxtSignalTable **out);

// Looks up one score. Returns `PXT_STATUS_NOT_FOUND` when the cell is absent.
//
// # Safety
// `table` must be a live handle, the strings NUL-terminated, `out` writable.
enum PxtStatus pxt_signal_table_score(const struct PxtSignalTable *table,
                                      const char *topic,
                                      const char *provider,
                                      const char *locale,
                                      double *out);

// Number of entries in the table.
//
// # Safety
// `table` must be a live handle and `out` writable.
enum PxtStatus pxt_signal_table_len(const struct PxtSignalTable *table, uintptr_t *out);

// Releases a table handle. Null is ignored.
//
// # Safety
// `table` must come from `pxt_signal_table_load` and not be used afterwards.
void pxt_signal_table_free(struct PxtSignalTable *table);

// Product of `n` other ranking signals and a provider-topic score.
//
// # Safety
// `others` must point at `n` doubles and `out` at one writable double.
enum PxtStatus pxt_compose_multiplicative(const double *others,
                                          uintptr_t n,
                                          double pxt_score,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PXTRANK_H */
