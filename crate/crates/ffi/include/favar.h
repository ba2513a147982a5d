#ifndef FAVAR_H
#define FAVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which estimated matrix to copy out.
typedef enum FavarMatrix {
  // `n x q` factor hyperplane.
  FAVAR_MATRIX_THETA = 0,
  // `q x p2` sparse coefficients.
  FAVAR_MATRIX_GAMMA = 1,
  // `n x p1` factors.
  FAVAR_MATRIX_FACTORS = 2,
  // `q x p1` loadings.
  FAVAR_MATRIX_LOADINGS = 3,
} FavarMatrix;

// Result code of every call.
typedef enum FavarStatus {
  FAVAR_STATUS_OK = 0,
  FAVAR_STATUS_NULL_POINTER = 1,
  FAVAR_STATUS_INVALID_ARGUMENT = 2,
  FAVAR_STATUS_DIMENSION_MISMATCH = 3,
  // No grid point of the selection converged.
  FAVAR_STATUS_NO_CONVERGENCE = 4,
  // Degenerate data: zero residuals, zero signal, failed decompositions.
  FAVAR_STATUS_NUMERICAL = 5,
  FAVAR_STATUS_IO = 6,
  // The output buffer is shorter than required.
  FAVAR_STATUS_BUFFER_TOO_SMALL = 7,
  FAVAR_STATUS_PANIC = 8,
} FavarStatus;

// Opaque estimation result.
typedef struct FavarFitHandle FavarFitHandle;

// Opaque synthetic system.
typedef struct FavarSimHandle FavarSimHandle;

// Estimation settings; obtain defaults from [`favar_fit_options_default`].
typedef struct FavarFitOptions {
  // VAR lag order, >= 1.
  size_t lags;
  // Largest rank searched; 0 for the default.
  size_t max_rank;
  // Number of log-spaced penalty values in each grid.
  size_t lambda_points;
  // Smallest grid penalty as a fraction of the largest.
  double lambda_min_ratio;
  // Factors to extract; 0 to use the selected rank.
  size_t factors;
  // Non-zero to count nonzeros over the whole coefficient matrix in the
  // rank criterion instead of per regression.
  uint8_t literal_penalty;
} FavarFitOptions;

// Dimensions of a fit.
typedef struct FavarFitDims {
  size_t n;
  // Number of extracted factors.
  size_t p1;
  size_t p2;
  size_t q;
  size_t lags;
  // Selected rank of the factor hyperplane.
  size_t rank;
} FavarFitDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// Valid until the next call on the same thread.
const char *favar_last_error(void);

// Library version as a static NUL-terminated string.
const char *favar_version(void);

struct FavarFitOptions favar_fit_options_default(void);

// Two-stage fit of `x` (`n x p2`) and `y` (`n x q`), both row-major and
// uncentered. `options` may be null for defaults. On success `*out` owns a
// handle to release with [`favar_fit_free`].
//
// # Safety
// `x` and `y` must point to `n * p2` and `n * q` doubles; `out` must be valid
// for writes.
enum FavarStatus favar_fit(const double *x,
                           const double *y,
                           size_t n,
                           size_t p2,
                           size_t q,
                           const struct FavarFitOptions *options,
                           struct FavarFitHandle **out);

// Releases a fit handle; null is ignored.
//
// # Safety
// `handle` must come from [`favar_fit`] and not be used afterwards.
void favar_fit_free(struct FavarFitHandle *handle);

// # Safety
// `handle` must be a live fit handle and `dims` valid for writes.
enum FavarStatus favar_fit_dims(const struct FavarFitHandle *handle, struct FavarFitDims *dims);

// Selected penalties: calibration fit into `lambda_gamma`, VAR fit into
// `lambda_a`.
//
// # Safety
// `handle` must be live; the outputs must be valid for writes.
enum FavarStatus favar_fit_penalties(const struct FavarFitHandle *handle,
                                     double *lambda_gamma,
                                     double *lambda_a);

// Copies a matrix (row-major) into `buf` of `len` doubles.
//
// # Safety
// `handle` must be live and `buf` valid for `len` writes.
enum FavarStatus favar_fit_matrix(const struct FavarFitHandle *handle,
                                  enum FavarMatrix which,
                                  double *buf,
                                  size_t len);

// Copies the `(p1 + p2) x (p1 + p2)` transition matrix of lag `lag`
// (1-based), factors first.
//
// # Safety
// `handle` must be live and `buf` valid for `len` writes.
enum FavarStatus favar_fit_transition(const struct FavarFitHandle *handle,
                                      size_t lag,
                                      double *buf,
                                      size_t len);

// `h`-step forecast of the `p2` observed series on the original scale.
//
// # Safety
// `handle` must be live and `buf` valid for `len` writes.
enum FavarStatus favar_fit_forecast(const struct FavarFitHandle *handle,
                                    size_t horizon,
                                    double *buf,
                                    size_t len);

// Simulates preset `setting` (e.g. "A1") with `extra` rows beyond its sample
// size.
//
// # Safety
// `setting` must be a NUL-terminated string and `out` valid for writes.
enum FavarStatus favar_simulate(const char *setting,
                                uint64_t seed,
                                size_t extra,
                                struct FavarSimHandle **out);

// Rows, observed series and calibration series of a simulated system.
//
// # Safety
// `handle` must be live; outputs must be valid for writes.
enum FavarStatus favar_sim_dims(const struct FavarSimHandle *handle,
                                size_t *n,
                                size_t *p2,
                                size_t *q);

// Copies the observed panel (`which = 0`) or the calibration panel
// (`which = 1`), row-major.
//
// # Safety
// `handle` must be live and `buf` valid for `len` writes.
enum FavarStatus favar_sim_panel(const struct FavarSimHandle *handle,
                                 uint32_t which,
                                 double *buf,
                                 size_t len);

// Releases a simulation handle; null is ignored.
//
// # Safety
// `handle` must come from [`favar_simulate`] and not be used afterwards.
void favar_sim_free(struct FavarSimHandle *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAVAR_H */
