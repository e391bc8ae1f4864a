#ifndef ORTHOKIT_H
#define ORTHOKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OkStatus {
  OK_STATUS_OK = 0,
  OK_STATUS_NULL_POINTER = 1,
  OK_STATUS_INVALID_PARAM = 2,
  OK_STATUS_SHAPE = 3,
  OK_STATUS_REJECTED = 4,
  OK_STATUS_NOT_CONVERGED = 5,
  OK_STATUS_NUMERIC = 6,
  OK_STATUS_BUFFER_TOO_SMALL = 7,
  OK_STATUS_IO = 8,
  OK_STATUS_PANIC = 9,
} OkStatus;

/**
 * Values of [`OkLayerConfig::padding`].
 */
typedef enum OkPadding {
  OK_PADDING_ZERO = 0,
  OK_PADDING_CIRCULAR = 1,
} OkPadding;

/**
 * Values of the `method` argument of [`ok_orthogonalize`].
 */
typedef enum OkOrthoMethod {
  OK_ORTHO_METHOD_BJORCK = 0,
  OK_ORTHO_METHOD_CAYLEY = 1,
  OK_ORTHO_METHOD_EXP = 2,
  OK_ORTHO_METHOD_CHOLESKY = 3,
  OK_ORTHO_METHOD_QR = 4,
} OkOrthoMethod;

/**
 * Values of the `method` argument of [`ok_kernel_spectrum`].
 */
typedef enum OkSpectrumMethod {
  OK_SPECTRUM_METHOD_TOEPLITZ_SVD = 0,
  OK_SPECTRUM_METHOD_FFT_CIRCULAR = 1,
  OK_SPECTRUM_METHOD_GRAM_BOUND = 2,
  OK_SPECTRUM_METHOD_POWER_ITER = 3,
} OkSpectrumMethod;

/**
 * Convolution kernel together with the layer geometry it is applied with.
 */
typedef struct OkKernel OkKernel;

typedef struct OkLayerConfig {
  size_t c_in;
  size_t c_out;
  size_t kernel_size;
  size_t stride;
  size_t dilation;
  size_t groups;
  /**
   * An [`OkPadding`] value.
   */
  uint32_t padding;
  bool transposed;
} OkLayerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message of this thread, including the
 * terminating NUL; 0 when there is none.
 */
size_t ok_last_error_length(void);

/**
 * Copy the last error message into `buf`, truncated to `len - 1` bytes and
 * NUL terminated. Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
size_t ok_last_error_message(char *buf, size_t len);

/**
 * `OK_STATUS_OK` when an exactly orthogonal layer with `cfg` exists,
 * `OK_STATUS_REJECTED` with the reason as the error message otherwise.
 *
 * # Safety
 * `cfg` must point to a valid config.
 */
enum OkStatus ok_check_config(const struct OkLayerConfig *cfg);

/**
 * Random orthogonal AOC kernel for `cfg`, drawn from `seed`.
 *
 * # Safety
 * `cfg` must point to a valid config and `out` to writable storage.
 */
enum OkStatus ok_aoc_new(const struct OkLayerConfig *cfg, uint64_t seed, struct OkKernel **out);

/**
 * Random SOC kernel for `cfg`, drawn from `seed`.
 *
 * # Safety
 * `cfg` must point to a valid config and `out` to writable storage.
 */
enum OkStatus ok_soc_new(const struct OkLayerConfig *cfg, uint64_t seed, struct OkKernel **out);

/**
 * Wrap caller data of shape `(c_out, c_in / groups, kh, kw)`, row-major,
 * applied with the geometry of `cfg`. `cfg.kernel_size` is ignored.
 *
 * # Safety
 * `data` must hold the product of `shape` values, `shape` four values.
 */
enum OkStatus ok_kernel_from_data(const double *data,
                                  const size_t *shape,
                                  const struct OkLayerConfig *cfg,
                                  struct OkKernel **out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `k` must come from this library and not be used afterwards.
 */
void ok_kernel_free(struct OkKernel *k);

/**
 * Kernel shape `(c_out, c_in / groups, kh, kw)`.
 *
 * # Safety
 * `k` must be a live handle and `shape` must hold four values.
 */
enum OkStatus ok_kernel_shape(const struct OkKernel *k, size_t *shape);

/**
 * Copy the kernel entries, row-major, into `buf`.
 *
 * # Safety
 * `k` must be a live handle and `buf` must hold `len` values.
 */
enum OkStatus ok_kernel_data(const struct OkKernel *k, double *buf, size_t len);

/**
 * Output shape `(c, h, w)` of the layer on an `h × w` input.
 *
 * # Safety
 * `k` must be a live handle and `out_shape` must hold three values.
 */
enum OkStatus ok_kernel_output_shape(const struct OkKernel *k,
                                     size_t h,
                                     size_t w,
                                     size_t *out_shape);

/**
 * Apply the layer to one `(c_in, h, w)` input, row-major. `y_len` must be
 * at least the product of [`ok_kernel_output_shape`].
 *
 * # Safety
 * `x` must hold `c_in · h · w` values and `y` must hold `y_len` values.
 */
enum OkStatus ok_kernel_apply(const struct OkKernel *k,
                              const double *x,
                              size_t h,
                              size_t w,
                              double *y,
                              size_t y_len);

/**
 * Extreme singular values of the layer on `h × w` inputs. `iters` is used
 * by the Gram and power methods. Methods that only bound the top of the
 * spectrum report `sigma_min = 0`.
 *
 * # Safety
 * `k` must be a live handle; `sigma_max` and `sigma_min` must be writable.
 */
enum OkStatus ok_kernel_spectrum(const struct OkKernel *k,
                                 size_t h,
                                 size_t w,
                                 uint32_t method,
                                 size_t iters,
                                 double *sigma_max,
                                 double *sigma_min);

/**
 * Orthogonalize a row-major `rows × cols` matrix with default parameters
 * of `method` and write the result, row-major, to `out`.
 *
 * # Safety
 * `w` and `out` must each hold `rows · cols` values.
 */
enum OkStatus ok_orthogonalize(const double *w,
                               size_t rows,
                               size_t cols,
                               uint32_t method,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORTHOKIT_H */
