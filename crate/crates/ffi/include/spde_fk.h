#ifndef SPDE_FK_H
#define SPDE_FK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SpdeFkStatus {
  SPDE_FK_STATUS_OK = 0,
  SPDE_FK_STATUS_NULL_POINTER = 1,
  SPDE_FK_STATUS_INVALID_UTF8 = 2,
  SPDE_FK_STATUS_PARSE = 3,
  SPDE_FK_STATUS_VALIDATION = 4,
  SPDE_FK_STATUS_ASSUMPTION = 5,
  SPDE_FK_STATUS_NUMERICAL = 6,
  SPDE_FK_STATUS_IO = 7,
  SPDE_FK_STATUS_INDEX = 8,
  SPDE_FK_STATUS_PANIC = 9,
} SpdeFkStatus;

/**
 * Estimates of v at a set of query points.
 */
typedef struct SpdeFkEstimates SpdeFkEstimates;

/**
 * A parsed and validated scenario.
 */
typedef struct SpdeFkScenario SpdeFkScenario;

/**
 * A pathwise comparison of estimates with the finite-difference solution.
 */
typedef struct SpdeFkValidation SpdeFkValidation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *spde_fk_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *spde_fk_last_error(void);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpdeFkStatus spde_fk_scenario_parse(const char *toml, struct SpdeFkScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SpdeFkStatus spde_fk_scenario_load(const char *path, struct SpdeFkScenario **out);

/**
 * # Safety
 * `scenario` must be NULL or a handle from this library, freed at most once.
 */
void spde_fk_scenario_free(struct SpdeFkScenario *scenario);

/**
 * # Safety
 * `scenario` must be a valid handle.
 */
enum SpdeFkStatus spde_fk_scenario_set_seed(struct SpdeFkScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a valid handle.
 */
enum SpdeFkStatus spde_fk_scenario_set_samples(struct SpdeFkScenario *scenario, uintptr_t samples);

/**
 * Spatial dimension, or 0 for a NULL handle.
 *
 * # Safety
 * `scenario` must be NULL or a valid handle.
 */
uintptr_t spde_fk_scenario_dim(const struct SpdeFkScenario *scenario);

/**
 * Number of time steps of the scenario grid, or 0 for a NULL handle.
 *
 * # Safety
 * `scenario` must be NULL or a valid handle.
 */
uintptr_t spde_fk_scenario_steps(const struct SpdeFkScenario *scenario);

/**
 * Final time, or NaN for a NULL handle.
 *
 * # Safety
 * `scenario` must be NULL or a valid handle.
 */
double spde_fk_scenario_t_final(const struct SpdeFkScenario *scenario);

/**
 * Monte Carlo estimates of v at time node `node` (0 means the final node)
 * for the w path with index `path`. `xs` holds `n_points` points of
 * dimension `spde_fk_scenario_dim`, row-major.
 *
 * # Safety
 * `xs` must point to `n_points * dim` doubles, `out` must be valid.
 */
enum SpdeFkStatus spde_fk_estimate(const struct SpdeFkScenario *scenario,
                                   uint64_t path,
                                   uintptr_t node,
                                   const double *xs,
                                   uintptr_t n_points,
                                   struct SpdeFkEstimates **out);

/**
 * Number of estimates, or 0 for a NULL handle.
 *
 * # Safety
 * `estimates` must be NULL or a valid handle.
 */
uintptr_t spde_fk_estimates_len(const struct SpdeFkEstimates *estimates);

/**
 * Mean, standard error and largest inversion residual of estimate `i`.
 * Any of the output pointers may be NULL.
 *
 * # Safety
 * `estimates` must be a valid handle; non-NULL outputs must be writable.
 */
enum SpdeFkStatus spde_fk_estimates_get(const struct SpdeFkEstimates *estimates,
                                        uintptr_t i,
                                        double *mean,
                                        double *stderr,
                                        double *residual);

/**
 * # Safety
 * `estimates` must be NULL or a handle from this library, freed at most once.
 */
void spde_fk_estimates_free(struct SpdeFkEstimates *estimates);

/**
 * Finite-difference solution at the final time on the scenario's space grid
 * for the w path with index `path`, read at `n_points` grid nodes.
 *
 * # Safety
 * `xs` must point to `n_points * dim` doubles and `values` to `n_points`
 * writable doubles.
 */
enum SpdeFkStatus spde_fk_reference(const struct SpdeFkScenario *scenario,
                                    uint64_t path,
                                    const double *xs,
                                    uintptr_t n_points,
                                    double *values);

/**
 * Runs the pathwise validation over `paths` w paths with a `lattice`-point
 * query lattice per axis.
 *
 * # Safety
 * `scenario` must be a valid handle and `out` a valid pointer.
 */
enum SpdeFkStatus spde_fk_validate(const struct SpdeFkScenario *scenario,
                                   uintptr_t paths,
                                   uintptr_t lattice,
                                   struct SpdeFkValidation **out);

/**
 * Largest relative L2 error over the paths, or NaN for a NULL handle.
 *
 * # Safety
 * `validation` must be NULL or a valid handle.
 */
double spde_fk_validation_max_relative_l2(const struct SpdeFkValidation *validation);

/**
 * 1 when every path is within `tolerance` (relative L2) or within its
 * Monte Carlo band, 0 otherwise or for a NULL handle.
 *
 * # Safety
 * `validation` must be NULL or a valid handle.
 */
int32_t spde_fk_validation_passed(const struct SpdeFkValidation *validation, double tolerance);

/**
 * # Safety
 * `validation` must be NULL or a handle from this library, freed at most once.
 */
void spde_fk_validation_free(struct SpdeFkValidation *validation);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SPDE_FK_H */
