/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SPANPROMPT_H
#define SPANPROMPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_INVALID_UTF8 = 3,
  /**
   * Bad input data, configuration or checkpoint.
   */
  SP_STATUS_VALIDATION = 4,
  /**
   * I/O or other failure while running.
   */
  SP_STATUS_RUNTIME = 5,
  SP_STATUS_PANIC = 6,
} SpStatus;

/**
 * Loaded checkpoint.
 */
typedef struct SpModel SpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *sp_last_error_message(void);

/**
 * Library version, a static nul-terminated string.
 */
const char *sp_version(void);

/**
 * Loads a checkpoint written by `spanprompt train`.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SpStatus sp_model_open(const char *path, struct SpModel **out);

/**
 * # Safety
 * `model` must come from `sp_model_open` and not be freed twice. Null is
 * ignored.
 */
void sp_model_free(struct SpModel *model);

/**
 * Decodes every event of a gold-format JSONL document set and returns
 * prediction JSONL in `*out`. `max_span_len` 0 selects the default cap;
 * a non-zero `sequential` runs one pass per slot.
 *
 * # Safety
 * `model` must be live, `jsonl` nul-terminated and `out` valid.
 */
enum SpStatus sp_model_predict_jsonl(const struct SpModel *model,
                                     const char *jsonl,
                                     uintptr_t max_span_len,
                                     int32_t sequential,
                                     char **out);

/**
 * Scores prediction JSONL against gold JSONL; `*out` receives the report
 * as JSON, breakdowns included.
 *
 * # Safety
 * Both inputs nul-terminated, `out` valid.
 */
enum SpStatus sp_score_jsonl(const char *pred, const char *gold, char **out);

/**
 * # Safety
 * `s` must come from this library. Null is ignored.
 */
void sp_string_free(char *s);

/**
 * Minimum-cost matching of a row-major `rows x cols` non-negative cost
 * matrix. `row_to_col` (length `rows`) receives each row's column or -1.
 *
 * # Safety
 * `cost` must hold `rows * cols` values; outputs must be valid.
 */
enum SpStatus sp_hungarian(const int64_t *cost,
                           uintptr_t rows,
                           uintptr_t cols,
                           int64_t *row_to_col,
                           int64_t *total);

/**
 * Best span under the length cap; (0, 0) is the no-argument answer.
 *
 * # Safety
 * `start` and `end` must hold `len` values; outputs must be valid.
 */
enum SpStatus sp_greedy_span(const float *start,
                             const float *end,
                             uintptr_t len,
                             uintptr_t max_span_len,
                             uintptr_t *out_start,
                             uintptr_t *out_end,
                             double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPANPROMPT_H */
