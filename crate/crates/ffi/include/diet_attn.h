#ifndef DIET_ATTN_H
#define DIET_ATTN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DietStatus {
  DIET_STATUS_OK = 0,
  DIET_STATUS_NULL_POINTER = 1,
  DIET_STATUS_INVALID_ARGUMENT = 2,
  DIET_STATUS_SHAPE = 3,
  DIET_STATUS_NUMERIC = 4,
  DIET_STATUS_IO = 5,
  DIET_STATUS_BUFFER_TOO_SMALL = 6,
  DIET_STATUS_PANIC = 7,
} DietStatus;

/**
 * Opaque model handle.
 */
typedef struct DietModel DietModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *diet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *diet_version(void);

/**
 * Creates a model. `scheme` is one of `none`, `input-add`, `sinusoidal`,
 * `diet-abs`, `diet-rel`, `shaw`, `t5`, `linformer-diet-abs`.
 *
 * # Safety
 * `scheme` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DietStatus diet_model_new(const char *scheme,
                               size_t n,
                               size_t d,
                               size_t heads,
                               size_t layers,
                               size_t d_p,
                               size_t vocab,
                               size_t num_classes,
                               uint64_t seed,
                               struct DietModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void diet_model_free(struct DietModel *model);

/**
 * Number of logits per position.
 *
 * # Safety
 * `model` must be a live handle or NULL (which yields 0).
 */
size_t diet_model_num_classes(const struct DietModel *model);

/**
 * Sequence length the model was built for.
 *
 * # Safety
 * `model` must be a live handle or NULL (which yields 0).
 */
size_t diet_model_seq_len(const struct DietModel *model);

/**
 * Writes `len × num_classes` row-major logits into `logits`, which holds `capacity` doubles.
 *
 * # Safety
 * `tokens` must point to `len` values and `logits` to `capacity` writable doubles.
 */
enum DietStatus diet_model_forward(const struct DietModel *model,
                                   const uint32_t *tokens,
                                   size_t len,
                                   double *logits,
                                   size_t capacity);

/**
 * Writes the model to `path`.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum DietStatus diet_model_save(const struct DietModel *model, const char *path);

/**
 * Loads a model written by `diet_model_save` or the `diet train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DietStatus diet_model_load(const char *path, struct DietModel **out);

/**
 * Numerical rank of a row-major `rows × cols` matrix: singular values above
 * `rel_tol` times the largest.
 *
 * # Safety
 * `data` must point to `rows * cols` doubles and `rank` to a writable `size_t`.
 */
enum DietStatus diet_numerical_rank(const double *data,
                                    size_t rows,
                                    size_t cols,
                                    double rel_tol,
                                    size_t *rank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIET_ATTN_H */
