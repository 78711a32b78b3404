#ifndef LPNET_H
#define LPNET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpnetStatus {
  LPNET_STATUS_OK = 0,
  LPNET_STATUS_INVALID_ARGUMENT = 1,
  LPNET_STATUS_INVALID_CONFIGURATION = 2,
  LPNET_STATUS_INVALID_STATE = 3,
  LPNET_STATUS_FORMAT = 4,
  LPNET_STATUS_IO = 5,
  LPNET_STATUS_NULL_POINTER = 6,
  LPNET_STATUS_PANIC = 7,
} LpnetStatus;

/**
 * Opaque model handle.
 */
typedef struct LpnetModel LpnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread (empty after success).
 * The pointer stays valid until the next `lpnet_*` call on this thread.
 */
const char *lpnet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lpnet_version(void);

/**
 * Builds a freshly initialized model. `config_json` may be NULL for the
 * default configuration; otherwise its fields override the defaults.
 *
 * # Safety
 * `config_json` must be NULL or a valid NUL-terminated string; `out` must
 * be a valid pointer to writable storage.
 */
enum LpnetStatus lpnet_model_new(const char *config_json, uint64_t seed, struct LpnetModel **out);

/**
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be writable.
 */
enum LpnetStatus lpnet_model_load(const char *path, struct LpnetModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed; `path` must be a
 * valid NUL-terminated string.
 */
enum LpnetStatus lpnet_model_save(const struct LpnetModel *model, const char *path);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from this library that has not been freed.
 */
void lpnet_model_free(struct LpnetModel *model);

/**
 * Number of input values (`channels × size × size`), or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t lpnet_model_input_len(const struct LpnetModel *model);

/**
 * Number of output classes, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t lpnet_model_classes(const struct LpnetModel *model);

/**
 * Total trainable parameter count, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t lpnet_model_parameter_count(const struct LpnetModel *model);

/**
 * Writes the logits for one channel-major input into `logits`.
 *
 * # Safety
 * `input` must hold `input_len` readable doubles and `logits` `logits_len`
 * writable doubles.
 */
enum LpnetStatus lpnet_model_forward(const struct LpnetModel *model,
                                     const double *input,
                                     size_t input_len,
                                     double *logits,
                                     size_t logits_len);

/**
 * Writes the predicted class (largest logit, lowest index on ties).
 *
 * # Safety
 * As for [`lpnet_model_forward`]; `class_out` must be writable.
 */
enum LpnetStatus lpnet_model_predict(const struct LpnetModel *model,
                                     const double *input,
                                     size_t input_len,
                                     uint32_t *class_out);

/**
 * Pools one window: `(Σ G·|I|^p)^(1/p)`, or `max |I|` when `p` is +infinity.
 *
 * # Safety
 * `values` and `weights` must each hold `len` readable doubles; `out` must
 * be writable.
 */
enum LpnetStatus lpnet_pool_window(const double *values,
                                   const double *weights,
                                   size_t len,
                                   double p,
                                   double *out);

/**
 * Preprocesses one planar 8-bit RGB image (`3 × height × width`, channel
 * major) into normalized Y, U, V planes written to `out` (same layout).
 *
 * # Safety
 * `pixels` must hold `3·height·width` readable bytes and `out` as many
 * writable doubles.
 */
enum LpnetStatus lpnet_preprocess_rgb8(const uint8_t *pixels,
                                       size_t height,
                                       size_t width,
                                       double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LPNET_H */
