#ifndef RELPROBE_H
#define RELPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum RelprobeStatus {
  RELPROBE_STATUS_OK = 0,
  RELPROBE_STATUS_NULL_POINTER = 1,
  RELPROBE_STATUS_INVALID_UTF8 = 2,
  RELPROBE_STATUS_IO = 3,
  /**
   * Malformed, truncated or mismatched file contents.
   */
  RELPROBE_STATUS_FORMAT = 4,
  RELPROBE_STATUS_SHAPE = 5,
  RELPROBE_STATUS_INVALID_ARGUMENT = 6,
  /**
   * Dataset construction could not satisfy its constraints.
   */
  RELPROBE_STATUS_DATASET = 7,
  RELPROBE_STATUS_CONFIG = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  RELPROBE_STATUS_PANIC = 9,
  RELPROBE_STATUS_INTERNAL = 10,
} RelprobeStatus;

/**
 * A RELACT1 activation file held in memory.
 */
typedef struct RelprobeActivations RelprobeActivations;

/**
 * A trained linear probe loaded from its JSON file.
 */
typedef struct RelprobeProbe RelprobeProbe;

/**
 * A sparse autoencoder read from a RELSAE1 file.
 */
typedef struct RelprobeSae RelprobeSae;

/**
 * Summary of a per-layer accuracy curve.
 */
typedef struct RelprobeDepthProfile {
  double mean;
  double peak;
  size_t peak_depth;
  double com;
  double peak_depth_norm;
  double com_norm;
} RelprobeDepthProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful call. Valid until the next call on the same thread.
 */
const char *relprobe_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *relprobe_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RelprobeStatus relprobe_sae_open(const char *path, struct RelprobeSae **out);

/**
 * # Safety
 * `sae` must be NULL or a handle from `relprobe_sae_open` not yet freed.
 */
void relprobe_sae_free(struct RelprobeSae *sae);

/**
 * # Safety
 * `sae` must be a live handle; the out pointers must be valid.
 */
enum RelprobeStatus relprobe_sae_shape(const struct RelprobeSae *sae,
                                       size_t *d_model,
                                       size_t *n_latents);

/**
 * Encodes one `d_model` vector into `n_latents` latents.
 *
 * # Safety
 * `x` must hold `x_len` doubles and `out` room for `out_len`.
 */
enum RelprobeStatus relprobe_sae_encode(const struct RelprobeSae *sae,
                                        const double *x,
                                        size_t x_len,
                                        double *out,
                                        size_t out_len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RelprobeStatus relprobe_probe_load(const char *path, struct RelprobeProbe **out);

/**
 * # Safety
 * `probe` must be NULL or a handle from `relprobe_probe_load` not yet freed.
 */
void relprobe_probe_free(struct RelprobeProbe *probe);

/**
 * Input width and number of trained classes.
 *
 * # Safety
 * `probe` must be a live handle; the out pointers must be valid.
 */
enum RelprobeStatus relprobe_probe_shape(const struct RelprobeProbe *probe,
                                         size_t *n_features,
                                         size_t *n_classes);

/**
 * Five-class logits of one input row, indexed by relation. Classes absent
 * from training get negative infinity.
 *
 * # Safety
 * `x` must hold `x_len` doubles and `out` room for five.
 */
enum RelprobeStatus relprobe_probe_logits(const struct RelprobeProbe *probe,
                                          const double *x,
                                          size_t x_len,
                                          double *out);

/**
 * Predicted relation index for each of `n_rows` row-major inputs.
 *
 * # Safety
 * `x` must hold `n_rows * n_features` doubles and `out` room for `n_rows`.
 */
enum RelprobeStatus relprobe_probe_predict(const struct RelprobeProbe *probe,
                                           const double *x,
                                           size_t n_rows,
                                           size_t n_features,
                                           uint32_t *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RelprobeStatus relprobe_activations_open(const char *path, struct RelprobeActivations **out);

/**
 * # Safety
 * `acts` must be NULL or a handle from `relprobe_activations_open` not yet
 * freed.
 */
void relprobe_activations_free(struct RelprobeActivations *acts);

/**
 * # Safety
 * `acts` must be a live handle; the out pointers must be valid.
 */
enum RelprobeStatus relprobe_activations_shape(const struct RelprobeActivations *acts,
                                               size_t *n_instances,
                                               size_t *n_layers,
                                               size_t *d_model);

/**
 * Copies one pooled vector. `stream` is the RELACT1 stream bit
 * (1 attention, 2 MLP, 4 post-residual, 8 embedding).
 *
 * # Safety
 * `acts` must be a live handle and `out` must have room for `out_len`.
 */
enum RelprobeStatus relprobe_activations_vector(const struct RelprobeActivations *acts,
                                                size_t instance,
                                                size_t layer,
                                                uint32_t stream_id,
                                                float *out,
                                                size_t out_len);

/**
 * Semantic logit difference of a five-class logit vector for a semantic
 * target (relation index 0 to 3).
 *
 * # Safety
 * `logits` must hold `len` doubles and `out` must be valid.
 */
enum RelprobeStatus relprobe_ld_sem(const double *logits, size_t len, uint32_t target, double *out);

/**
 * # Safety
 * `accs` must hold `n_layers` doubles and `out` must be valid.
 */
enum RelprobeStatus relprobe_depth_profile(const double *accs,
                                           size_t n_layers,
                                           struct RelprobeDepthProfile *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELPROBE_H */
