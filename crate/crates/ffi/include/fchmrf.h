#ifndef FCHMRF_H
#define FCHMRF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum FchmrfStatus {
  FCHMRF_STATUS_OK = 0,
  FCHMRF_STATUS_NULL_POINTER = 1,
  FCHMRF_STATUS_INVALID_ARGUMENT = 2,
  FCHMRF_STATUS_DIMENSION_MISMATCH = 3,
  FCHMRF_STATUS_NON_FINITE = 4,
  FCHMRF_STATUS_NUMERICAL = 5,
  FCHMRF_STATUS_IO = 6,
  FCHMRF_STATUS_TOO_LARGE = 7,
  FCHMRF_STATUS_PANIC = 8,
} FchmrfStatus;

/**
 * Opaque fitted model with its LIS values and rejections.
 */
typedef struct FchmrfFit FchmrfFit;

/**
 * Opaque permutohedral lattice.
 */
typedef struct FchmrfLattice FchmrfLattice;

/**
 * EM and testing settings.
 */
typedef struct FchmrfFitConfig {
  double alpha;
  size_t r;
  size_t samples;
  size_t max_iterations;
  size_t patience;
  size_t epochs;
  double learning_rate;
  double weight_decay;
  /**
   * Nonzero starts the smoothness weight at 5.
   */
  uint8_t weak_signal;
  size_t pair_budget;
  uint64_t seed;
} FchmrfFitConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *fchmrf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fchmrf_version(void);

/**
 * Builds a lattice over `m` points of dimension `d` (row-major,
 * bandwidth units).
 *
 * # Safety
 * `positions` must hold `m * d` values; `out` must be writable.
 */
enum FchmrfStatus fchmrf_lattice_build(const double *positions,
                                       size_t m,
                                       size_t d,
                                       struct FchmrfLattice **out);

/**
 * Gaussian filter of one value per point, self term included.
 *
 * # Safety
 * `values` and `out` must hold `m` entries, `m` being the build size.
 */
enum FchmrfStatus fchmrf_lattice_filter(const struct FchmrfLattice *lattice,
                                        const double *values,
                                        double *out,
                                        size_t m);

/**
 * Releases a lattice; null is ignored.
 *
 * # Safety
 * `lattice` must come from [`fchmrf_lattice_build`] and not be used again.
 */
void fchmrf_lattice_free(struct FchmrfLattice *lattice);

/**
 * Defaults matching the command-line tool.
 */
struct FchmrfFitConfig fchmrf_fit_config_default(void);

/**
 * Fits the field and runs the LIS procedure on `m` voxels.
 *
 * `coords` holds `3 m` integer grid coordinates `(x, y, z)` per voxel;
 * `delta_mu` may be null.
 *
 * # Safety
 * Arrays must hold the stated number of entries; `config` and `out` must
 * be valid.
 */
enum FchmrfStatus fchmrf_fit(const double *x,
                             const uint32_t *coords,
                             const double *delta_mu,
                             size_t m,
                             const struct FchmrfFitConfig *config,
                             struct FchmrfFit **out);

/**
 * Number of voxels in a fit.
 *
 * # Safety
 * `fit` must be a live handle or null.
 */
size_t fchmrf_fit_len(const struct FchmrfFit *fit);

/**
 * Fitted `(w0, w1, w2)`.
 *
 * # Safety
 * `out` must hold three values.
 */
enum FchmrfStatus fchmrf_fit_weights(const struct FchmrfFit *fit, double *out);

/**
 * LIS values and rejection flags (1 = rejected); `rejected` may be null.
 *
 * # Safety
 * `lis` and non-null `rejected` must hold `m` entries.
 */
enum FchmrfStatus fchmrf_fit_results(const struct FchmrfFit *fit,
                                     double *lis,
                                     uint8_t *rejected,
                                     size_t m);

/**
 * EM iterations run and the best loss reached.
 *
 * # Safety
 * Output pointers may be null; non-null ones must be writable.
 */
enum FchmrfStatus fchmrf_fit_em_summary(const struct FchmrfFit *fit,
                                        size_t *iterations,
                                        double *best_loss);

/**
 * # Safety
 * `fit` must come from [`fchmrf_fit`] and not be used again.
 */
void fchmrf_fit_free(struct FchmrfFit *fit);

/**
 * Step-up procedure on `m` LIS values; writes flags and the count.
 *
 * # Safety
 * `lis` and `rejected` must hold `m` entries; `k` must be writable or null.
 */
enum FchmrfStatus fchmrf_lis_test(const double *lis,
                                  size_t m,
                                  double alpha,
                                  uint8_t *rejected,
                                  size_t *k);

/**
 * Benjamini-Hochberg on `m` p-values.
 *
 * # Safety
 * As [`fchmrf_lis_test`].
 */
enum FchmrfStatus fchmrf_bh_test(const double *pvalues,
                                 size_t m,
                                 double alpha,
                                 uint8_t *rejected,
                                 size_t *k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FCHMRF_H */
