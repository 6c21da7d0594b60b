#ifndef COVSEL_H
#define COVSEL_H

/* Generated by cbindgen from the covsel-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `COVSEL_STATUS_OK` is zero.
 */
typedef enum CovselStatus {
  COVSEL_STATUS_OK = 0,
  COVSEL_STATUS_NULL_POINTER = 1,
  COVSEL_STATUS_INVALID_ARGUMENT = 2,
  COVSEL_STATUS_NOT_POSITIVE_DEFINITE = 3,
  COVSEL_STATUS_NOT_CONVERGED = 4,
  /**
   * Other numeric failure (zero probe weight, rank deficiency).
   */
  COVSEL_STATUS_NUMERIC = 5,
  COVSEL_STATUS_OUTSIDE_PATTERN = 6,
  COVSEL_STATUS_BUDGET_EXCEEDED = 7,
  COVSEL_STATUS_IO = 8,
  COVSEL_STATUS_PARSE = 9,
  COVSEL_STATUS_NOT_FOUND = 10,
  COVSEL_STATUS_PANIC = 11,
} CovselStatus;

/**
 * Which entries a selected inversion returns.
 */
typedef enum CovselIndexKind {
  COVSEL_INDEX_KIND_DIAGONAL = 0,
  /**
   * Lower-triangle pattern of the matrix, diagonal included.
   */
  COVSEL_INDEX_KIND_PATTERN = 1,
} CovselIndexKind;

/**
 * Fill-reducing Cholesky factor of a [`CovselMatrix`].
 */
typedef struct CovselFactor CovselFactor;

/**
 * Sparse symmetric positive definite matrix.
 */
typedef struct CovselMatrix CovselMatrix;

/**
 * Covariance values on an index set.
 */
typedef struct CovselSelcov CovselSelcov;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *covsel_last_error_message(void);

/**
 * Forgets the last failure on this thread.
 */
void covsel_clear_last_error(void);

/**
 * NUL-terminated library version; static storage.
 */
const char *covsel_version(void);

/**
 * Builds an `n × n` symmetric matrix from `nnz` coordinate entries. Each
 * unordered pair may appear in either triangle and duplicates are summed.
 *
 * # Safety
 * `rows`, `cols` and `vals` point to `nnz` elements; `out` is writable.
 */
enum CovselStatus covsel_matrix_from_triplets(size_t n,
                                              size_t nnz,
                                              const size_t *rows,
                                              const size_t *cols,
                                              const double *vals,
                                              struct CovselMatrix **out);

/**
 * Reads a symmetric Matrix Market coordinate file.
 *
 * # Safety
 * `file` is a NUL-terminated path; `out` is writable.
 */
enum CovselStatus covsel_matrix_read_mtx(const char *file, struct CovselMatrix **out);

/**
 * Writes the matrix as a symmetric Matrix Market file.
 *
 * # Safety
 * `m` is a live handle; `file` is a NUL-terminated path.
 */
enum CovselStatus covsel_matrix_write_mtx(const struct CovselMatrix *m, const char *file);

/**
 * Stationary AR(1) precision of length `n`.
 *
 * # Safety
 * `out` is writable.
 */
enum CovselStatus covsel_model_ar1(size_t n, double phi, struct CovselMatrix **out);

/**
 * RW1 posterior precision on a `dims[0] × … × dims[ndims-1]` lattice with
 * noise precisions drawn uniformly on (0.1, 0.2) from `lambda_seed`.
 *
 * # Safety
 * `dims` points to `ndims` elements; `out` is writable.
 */
enum CovselStatus covsel_model_rw1(size_t ndims,
                                   const size_t *dims,
                                   uint64_t lambda_seed,
                                   struct CovselMatrix **out);

/**
 * Dimension of the matrix; 0 for null.
 *
 * # Safety
 * `m` is null or a live handle.
 */
size_t covsel_matrix_n(const struct CovselMatrix *m);

/**
 * Stored lower-triangle entries; 0 for null.
 *
 * # Safety
 * `m` is null or a live handle.
 */
size_t covsel_matrix_nnz(const struct CovselMatrix *m);

/**
 * # Safety
 * `m` is null or a live handle, which is invalid afterwards.
 */
void covsel_matrix_free(struct CovselMatrix *m);

/**
 * AMD-ordered Cholesky factorization.
 *
 * # Safety
 * `m` is a live handle; `out` is writable.
 */
enum CovselStatus covsel_factor_new(const struct CovselMatrix *m, struct CovselFactor **out);

/**
 * Nonzeros of the factor, diagonal included; 0 for null.
 *
 * # Safety
 * `f` is null or a live handle.
 */
size_t covsel_factor_fill_count(const struct CovselFactor *f);

/**
 * # Safety
 * `f` is null or a live handle, which is invalid afterwards.
 */
void covsel_factor_free(struct CovselFactor *f);

/**
 * Exact covariances by Takahashi recursion. `m` must be the matrix `f`
 * was computed from; it supplies the pattern for `COVSEL_INDEX_KIND_PATTERN`.
 *
 * # Safety
 * `m` and `f` are live handles; `out` is writable.
 */
enum CovselStatus covsel_selected_inverse(const struct CovselMatrix *m,
                                          const struct CovselFactor *f,
                                          enum CovselIndexKind kind,
                                          struct CovselSelcov **out);

/**
 * Monte Carlo marginal variances from `n_s` exact samples drawn with `f`.
 *
 * # Safety
 * `f` is a live handle; `out` is writable.
 */
enum CovselStatus covsel_mc_diagonal(const struct CovselFactor *f,
                                     size_t n_s,
                                     uint64_t seed,
                                     struct CovselSelcov **out);

/**
 * Simple Rao-Blackwellized marginal variances with `confidence` intervals,
 * from `n_s` exact samples drawn with `f`, the factor of `m`.
 *
 * # Safety
 * `m` and `f` are live handles; `out` is writable.
 */
enum CovselStatus covsel_simple_rbmc(const struct CovselMatrix *m,
                                     const struct CovselFactor *f,
                                     size_t n_s,
                                     uint64_t seed,
                                     double confidence,
                                     struct CovselSelcov **out);

/**
 * Number of entries; 0 for null.
 *
 * # Safety
 * `s` is null or a live handle.
 */
size_t covsel_selcov_len(const struct CovselSelcov *s);

/**
 * Value of entry `(i, j)` in either order; `COVSEL_STATUS_NOT_FOUND` if
 * the pair is not in the index set.
 *
 * # Safety
 * `s` is a live handle; `value` is writable.
 */
enum CovselStatus covsel_selcov_get(const struct CovselSelcov *s,
                                    size_t i,
                                    size_t j,
                                    double *value);

/**
 * The `k`-th entry in index-set order, with `i >= j`.
 *
 * # Safety
 * `s` is a live handle; `i`, `j` and `value` are writable.
 */
enum CovselStatus covsel_selcov_entry(const struct CovselSelcov *s,
                                      size_t k,
                                      size_t *i,
                                      size_t *j,
                                      double *value);

/**
 * Confidence interval of the `k`-th entry; `COVSEL_STATUS_NOT_FOUND` when
 * the estimator attached none.
 *
 * # Safety
 * `s` is a live handle; `lo` and `hi` are writable.
 */
enum CovselStatus covsel_selcov_interval(const struct CovselSelcov *s,
                                         size_t k,
                                         double *lo,
                                         double *hi);

/**
 * Writes the values and uncertainty columns as CSV.
 *
 * # Safety
 * `s` is a live handle; `file` is a NUL-terminated path.
 */
enum CovselStatus covsel_selcov_write_csv(const struct CovselSelcov *s, const char *file);

/**
 * # Safety
 * `s` is null or a live handle, which is invalid afterwards.
 */
void covsel_selcov_free(struct CovselSelcov *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVSEL_H */
