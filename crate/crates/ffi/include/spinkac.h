#ifndef SPINKAC_H
#define SPINKAC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SkStatus {
  SK_STATUS_OK = 0,
  SK_STATUS_NULL_POINTER = 1,
  SK_STATUS_INVALID_ARGUMENT = 2,
  SK_STATUS_CAPACITY = 3,
  SK_STATUS_DOMAIN = 4,
  SK_STATUS_NUMERIC = 5,
  SK_STATUS_PRECONDITION = 6,
  SK_STATUS_IO = 7,
  SK_STATUS_PARSE = 8,
  SK_STATUS_BUFFER_TOO_SMALL = 9,
  SK_STATUS_PANIC = 99,
} SkStatus;

/**
 * Opaque model handle.
 */
typedef struct SkModel SkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `cap`) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t sk_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sk_version(void);

/**
 * Parses a model from text in the model-file format.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkStatus sk_model_parse(const char *text, struct SkModel **out);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkStatus sk_model_load(const char *path, struct SkModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void sk_model_free(struct SkModel *model);

/**
 * Number of sites `n`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SkStatus sk_model_sites(const struct SkModel *model, size_t *n);

/**
 * Number of conserved blocks of the kernel.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SkStatus sk_model_blocks(const struct SkModel *model, size_t *k);

/**
 * Gibbs measure of the model field into `out` (`2^n` entries).
 *
 * # Safety
 * `out` must be valid for `cap` doubles.
 */
enum SkStatus sk_gibbs(const struct SkModel *model, double *out, size_t cap);

/**
 * Largest entry of `|mu o mu - mu|` for the Gibbs measure of the model.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SkStatus sk_stationarity_residual(const struct SkModel *model, double *residual);

/**
 * Closed-form entropy decay rate; `Domain` when `J` is outside its range.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SkStatus sk_alpha_bound(const struct SkModel *model, double *alpha);

/**
 * Solution of the nonlinear equation at `t_end` from `p0` (`2^n`
 * weights, normalised internally) into `out`.
 *
 * # Safety
 * `p0` must hold `len` doubles and `out` be valid for `cap` doubles.
 */
enum SkStatus sk_evolve(const struct SkModel *model,
                        const double *p0,
                        size_t len,
                        double t_end,
                        double dt,
                        double *out,
                        size_t cap);

/**
 * Monte Carlo solution at time `t` from random collision trees; mean and
 * standard error per state. Bitwise reproducible for a fixed seed.
 *
 * # Safety
 * `p0` must hold `len` doubles; `mean` and `stderr` must be valid for
 * `cap` doubles each.
 */
enum SkStatus sk_tree_solution(const struct SkModel *model,
                               const double *p0,
                               size_t len,
                               double t,
                               size_t samples,
                               uint64_t seed,
                               double *mean,
                               double *stderr,
                               size_t cap);

/**
 * Sampled MLSI ratio of the single-block Down-Up walk on `L` sites with
 * magnetization `m`. `lambda` is `L x L` row-major, `w` has `L` entries.
 * `constant` receives the closed-form constant or NaN when it does not apply.
 *
 * # Safety
 * `lambda` must hold `l * l` doubles, `w` `l` doubles; out-pointers valid.
 */
enum SkStatus sk_downup_mlsi(size_t l,
                             const double *lambda,
                             const double *w,
                             int64_t m,
                             size_t trials,
                             uint64_t seed,
                             double *min_ratio,
                             double *constant);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINKAC_H */
