#ifndef ANCHORROUTE_H
#define ANCHORROUTE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Scale parameterization for `ar_fit`.
 */
#define AR_SCALE_FIXED 0

#define AR_SCALE_SHARED 1

#define AR_SCALE_PER_NEST 2

typedef enum ArStatus {
  AR_STATUS_OK = 0,
  AR_STATUS_NULL_POINTER = 1,
  AR_STATUS_INVALID_UTF8 = 2,
  AR_STATUS_INVALID_ARGUMENT = 3,
  AR_STATUS_IO = 4,
  AR_STATUS_PARSE = 5,
  AR_STATUS_INVALID_INPUT = 6,
  AR_STATUS_CONFIG = 7,
  AR_STATUS_PANIC = 8,
} ArStatus;

typedef struct ArDataset ArDataset;

typedef struct ArFitResult ArFitResult;

typedef struct ArNetwork ArNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ar_version(void);

/**
 * Message of the calling thread's last failure, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ar_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string obtained from this library, freed once.
 */
void ar_string_free(char *s);

/**
 * Load a network file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ArStatus ar_network_load(const char *path, struct ArNetwork **out);

/**
 * # Safety
 * `net` must be a live handle or NULL.
 */
size_t ar_network_node_count(const struct ArNetwork *net);

/**
 * # Safety
 * `net` must be a live handle or NULL.
 */
size_t ar_network_edge_count(const struct ArNetwork *net);

/**
 * # Safety
 * `net` must be NULL or a handle not yet freed.
 */
void ar_network_free(struct ArNetwork *net);

/**
 * Load a features table written by the `features` stage.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ArStatus ar_dataset_load(const char *path, struct ArDataset **out);

/**
 * Restrict a full dataset to model variant 1..=4 as a new handle.
 *
 * # Safety
 * `data` must be a live handle and `out` a valid pointer.
 */
enum ArStatus ar_dataset_project(const struct ArDataset *data, int variant, struct ArDataset **out);

/**
 * # Safety
 * `data` must be a live handle or NULL.
 */
size_t ar_dataset_observation_count(const struct ArDataset *data);

/**
 * # Safety
 * `data` must be a live handle or NULL.
 */
size_t ar_dataset_feature_count(const struct ArDataset *data);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void ar_dataset_free(struct ArDataset *data);

/**
 * Maximum-likelihood fit of a dataset with one of the `AR_SCALE_*` modes.
 *
 * # Safety
 * `data` must be a live handle and `out` a valid pointer.
 */
enum ArStatus ar_fit(const struct ArDataset *data, int scale, struct ArFitResult **out);

/**
 * # Safety
 * `fit` must be a live handle or NULL.
 */
size_t ar_fit_result_param_count(const struct ArFitResult *fit);

/**
 * # Safety
 * `fit` must be a live handle or NULL.
 */
double ar_fit_result_log_likelihood(const struct ArFitResult *fit);

/**
 * # Safety
 * `fit` must be a live handle or NULL.
 */
bool ar_fit_result_converged(const struct ArFitResult *fit);

/**
 * Copy estimates and standard errors (NaN where unidentified) into buffers
 * of `len` elements; `len` must equal the parameter count. `std_errors`
 * may be NULL.
 *
 * # Safety
 * Buffers must hold `len` doubles.
 */
enum ArStatus ar_fit_result_estimates(const struct ArFitResult *fit,
                                      double *estimates,
                                      double *std_errors,
                                      size_t len);

/**
 * Whole fit result as JSON; release with `ar_string_free`.
 *
 * # Safety
 * `fit` must be a live handle and `out` a valid pointer.
 */
enum ArStatus ar_fit_result_json(const struct ArFitResult *fit, char **out);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void ar_fit_result_free(struct ArFitResult *fit);

/**
 * Choice probabilities of one choice set.
 *
 * `x` is row-major `n_routes × n_features`, `ln_ps` has one entry per route
 * and `alpha` is row-major `n_routes × n_nests` with rows summing to one.
 * `mu` holds one scale in (0, 1) per nest, or is NULL for unit scales.
 * Results go to `probs` (`n_routes` doubles).
 *
 * # Safety
 * Every array must hold the stated number of elements.
 */
enum ArStatus ar_choice_probabilities(size_t n_routes,
                                      size_t n_features,
                                      size_t n_nests,
                                      const double *x,
                                      const double *ln_ps,
                                      const double *alpha,
                                      const double *beta,
                                      double beta_ps,
                                      const double *mu,
                                      double *probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANCHORROUTE_H */
