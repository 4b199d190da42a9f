#ifndef STURM_H
#define STURM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SturmStatus {
  STURM_STATUS_OK = 0,
  STURM_STATUS_NULL_POINTER = 1,
  STURM_STATUS_INVALID_ARGUMENT = 2,
  STURM_STATUS_CONFIG_ERROR = 3,
  /**
   * Loss of numerical fidelity: step underflow, Newton or eigen-solver failure.
   */
  STURM_STATUS_NUMERICAL_ERROR = 4,
  /**
   * A hypothesis of the theory fails: non-hyperbolic or non-generic data.
   */
  STURM_STATUS_HYPOTHESIS_VIOLATION = 5,
  STURM_STATUS_DROPPING_VIOLATION = 6,
  /**
   * Index out of range or caller buffer too small.
   */
  STURM_STATUS_OUT_OF_RANGE = 7,
  STURM_STATUS_PANIC = 8,
} SturmStatus;

/**
 * How an integration ended.
 */
typedef enum SturmOutcomeKind {
  STURM_OUTCOME_KIND_CONVERGED = 0,
  STURM_OUTCOME_KIND_GROW_UP = 1,
  STURM_OUTCOME_KIND_LEFT_BALL = 2,
  STURM_OUTCOME_KIND_TIME_LIMIT = 3,
} SturmOutcomeKind;

/**
 * Bounded equilibria in ascending `u(0)` order (opaque).
 */
typedef struct SturmEquilibria SturmEquilibria;

/**
 * Coefficient specification (opaque).
 */
typedef struct SturmSpec SturmSpec;

/**
 * Recorded trajectory (opaque).
 */
typedef struct SturmTrajectory SturmTrajectory;

/**
 * Scalar data of one equilibrium.
 */
typedef struct SturmEquilibriumInfo {
  size_t id;
  double eta;
  double u_pi;
  size_t morse_index;
  bool hyperbolic;
  double critical_eigenvalue;
  double residual;
} SturmEquilibriumInfo;

/**
 * Integration controls. Obtain defaults from [`sturm_step_options_default`].
 */
typedef struct SturmStepOptions {
  double dt_init;
  double dt_min;
  double dt_max;
  double rtol;
  double atol;
  double growup_threshold;
  double t_max;
  /**
   * Stop once `max(|u|, |u_x|)` exceeds this; `<= 0` disables.
   */
  double escape_radius;
  size_t track_modes;
} SturmStepOptions;

/**
 * Limit direction of a grow-up trajectory.
 */
typedef struct SturmDirection {
  size_t j;
  int32_t sign;
  double projection;
  /**
   * The trailing projection passed the 0.999 threshold.
   */
  bool determined;
} SturmDirection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated,
 * truncated to `cap`) and returns its full length without the NUL.
 * Returns 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t sturm_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sturm_version(void);

/**
 * `a == a_inf`, `f == 0`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum SturmStatus sturm_spec_linear(double b, double a_inf, struct SturmSpec **out);

/**
 * `a == a_inf`, `f = -c tanh(u)`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum SturmStatus sturm_spec_tanh_reaction(double b, double c, double a_inf, struct SturmSpec **out);

/**
 * Coefficients from the `coeff` object of a scenario file, given as JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for one pointer.
 */
enum SturmStatus sturm_spec_from_json(const char *json, struct SturmSpec **out);

/**
 * Dissipative cut-off of `spec` at radius `r`, as a new handle.
 *
 * # Safety
 * `spec` must be a live handle; `out` valid for one pointer.
 */
enum SturmStatus sturm_spec_cutoff(const struct SturmSpec *spec, double r, struct SturmSpec **out);

/**
 * `N_inf = floor(sqrt(b / a_inf))` of a spec.
 *
 * # Safety
 * `spec` must be a live handle; `out` valid for one value.
 */
enum SturmStatus sturm_spec_n_infinity(const struct SturmSpec *spec, size_t *out);

/**
 * # Safety
 * `spec` must be null or a handle not freed before.
 */
void sturm_spec_free(struct SturmSpec *spec);

/**
 * Number of equilibria at infinity, `2 (N_inf + 1)`.
 *
 * # Safety
 * `out` must be valid for one value.
 */
enum SturmStatus sturm_infinity_count(double a_inf, double b, size_t *out);

/**
 * Bounded equilibria with `u(0)` in `[eta_min, eta_max]`.
 *
 * # Safety
 * `spec` must be a live handle; `out` valid for one pointer.
 */
enum SturmStatus sturm_find_equilibria(const struct SturmSpec *spec,
                                       double eta_min,
                                       double eta_max,
                                       size_t scan_n,
                                       struct SturmEquilibria **out);

/**
 * # Safety
 * `eqs` must be a live handle or null (then 0).
 */
size_t sturm_equilibria_len(const struct SturmEquilibria *eqs);

/**
 * # Safety
 * `eqs` must be a live handle; `out` valid for one struct.
 */
enum SturmStatus sturm_equilibria_get(const struct SturmEquilibria *eqs,
                                      size_t index,
                                      struct SturmEquilibriumInfo *out);

/**
 * Copies the profile of equilibrium `index` (grid values) into `buf`.
 * `*len` receives the number of values, also when `buf` is too small.
 *
 * # Safety
 * `eqs` live; `buf` valid for `cap` doubles; `len` valid for one value.
 */
enum SturmStatus sturm_equilibria_profile(const struct SturmEquilibria *eqs,
                                          size_t index,
                                          double *buf,
                                          size_t cap,
                                          size_t *len);

/**
 * # Safety
 * `eqs` must be null or a handle not freed before.
 */
void sturm_equilibria_free(struct SturmEquilibria *eqs);

/**
 * Default integration controls.
 */
struct SturmStepOptions sturm_step_options_default(void);

/**
 * Integrates from `u0` given on the uniform grid of `n` nodes on `[0, pi]`.
 * `opts` may be null for defaults.
 *
 * # Safety
 * `spec` live; `u0` valid for `n` doubles; `opts` null or valid; `out`
 * valid for one pointer.
 */
enum SturmStatus sturm_integrate(const struct SturmSpec *spec,
                                 const double *u0,
                                 size_t n,
                                 const struct SturmStepOptions *opts,
                                 struct SturmTrajectory **out);

/**
 * Number of recorded samples.
 *
 * # Safety
 * `tr` must be a live handle or null (then 0).
 */
size_t sturm_trajectory_len(const struct SturmTrajectory *tr);

/**
 * Outcome kind and end time.
 *
 * # Safety
 * `tr` live; `kind` and `t` valid for one value each.
 */
enum SturmStatus sturm_trajectory_outcome(const struct SturmTrajectory *tr,
                                          enum SturmOutcomeKind *kind,
                                          double *t);

/**
 * Copies sample times and L2 norms (each `sturm_trajectory_len` values).
 * Either buffer may be null to skip it.
 *
 * # Safety
 * `tr` live; non-null buffers valid for `cap` doubles.
 */
enum SturmStatus sturm_trajectory_series(const struct SturmTrajectory *tr,
                                         double *times,
                                         double *norms,
                                         size_t cap);

/**
 * Copies the final state (grid values).
 *
 * # Safety
 * `tr` live; `buf` valid for `cap` doubles.
 */
enum SturmStatus sturm_trajectory_final(const struct SturmTrajectory *tr, double *buf, size_t cap);

/**
 * Grow-up direction; fails with `InvalidArgument` unless the run grew up.
 *
 * # Safety
 * `tr` live; `out` valid for one struct.
 */
enum SturmStatus sturm_trajectory_growup_direction(const struct SturmTrajectory *tr,
                                                   struct SturmDirection *out);

/**
 * # Safety
 * `tr` must be null or a handle not freed before.
 */
void sturm_trajectory_free(struct SturmTrajectory *tr);

/**
 * Assembles the attractor of a full scenario file (JSON text) and returns
 * the report as a newly allocated JSON string, released with
 * [`sturm_string_free`].
 *
 * # Safety
 * `config_json` NUL-terminated; `out` valid for one pointer.
 */
enum SturmStatus sturm_graph_report_json(const char *config_json, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not freed before.
 */
void sturm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STURM_H */
