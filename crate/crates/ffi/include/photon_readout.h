#ifndef PHOTON_READOUT_H
#define PHOTON_READOUT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrStatus {
  PR_STATUS_OK = 0,
  PR_STATUS_NULL_POINTER = 1,
  PR_STATUS_INVALID_ARGUMENT = 2,
  PR_STATUS_SIMULATION_FAILED = 3,
  PR_STATUS_NO_FIELD = 4,
  PR_STATUS_BUFFER_TOO_SMALL = 5,
  PR_STATUS_PANIC = 6,
} PrStatus;

typedef enum PrField {
  PR_FIELD_E = 0,
  PR_FIELD_P = 1,
  PR_FIELD_S = 2,
} PrField;

typedef enum PrObjective {
  PR_OBJECTIVE_ETA = 0,
  PR_OBJECTIVE_CHI_ETA = 1,
} PrObjective;

/**
 * Opaque trajectory handle.
 */
typedef struct PrTrajectory PrTrajectory;

/**
 * Model parameters, all rates as ν/2π in MHz.
 */
typedef struct PrParams {
  double kappa_mhz;
  double gamma_mhz;
  double w_mhz;
  double delta_big_mhz;
  double delta_mhz;
} PrParams;

/**
 * Gaussian control pulse.
 */
typedef struct PrPulse {
  double omega_mhz;
  double fwhm_ns;
  double t_center_ns;
} PrPulse;

typedef struct PrResult {
  double eta;
  double chi;
  double chi_eta;
  double nu_opt_mhz;
  double delta_opt_mhz;
  size_t evaluations;
  /**
   * Nonzero when δ_opt lies on the edge of the search interval.
   */
  int32_t at_boundary;
} PrResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The string
 * stays valid until the next failing call on the same thread.
 */
const char *pr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pr_version(void);

/**
 * Integrates the model on the default grid for the pulse. `rel_tol <= 0`
 * selects the default tolerance.
 *
 * # Safety
 * `params`, `pulse` and `out` must be valid pointers or NULL.
 */
enum PrStatus pr_simulate(const struct PrParams *params,
                          const struct PrPulse *pulse,
                          double rel_tol,
                          struct PrTrajectory **out);

/**
 * # Safety
 * `traj` must come from [`pr_simulate`] and not have been freed, or be NULL.
 */
void pr_trajectory_free(struct PrTrajectory *traj);

/**
 * Number of samples, or 0 for a NULL handle.
 *
 * # Safety
 * `traj` must be a live handle or NULL.
 */
size_t pr_trajectory_len(const struct PrTrajectory *traj);

/**
 * Copies the sample times (ns) into `out`, which holds `capacity` doubles.
 *
 * # Safety
 * `traj` must be a live handle; `out` must point to `capacity` writable doubles.
 */
enum PrStatus pr_trajectory_times(const struct PrTrajectory *traj, double *out, size_t capacity);

/**
 * Copies the real and imaginary parts of one amplitude.
 *
 * # Safety
 * `traj` must be a live handle; `re` and `im` must each point to `capacity`
 * writable doubles.
 */
enum PrStatus pr_trajectory_field(const struct PrTrajectory *traj,
                                  enum PrField field,
                                  double *re,
                                  double *im,
                                  size_t capacity);

/**
 * Retrieval efficiency of a trajectory.
 *
 * # Safety
 * `traj` must be a live handle; `eta` a writable double or NULL.
 */
enum PrStatus pr_efficiency(const struct PrTrajectory *traj, double *eta);

/**
 * η, χ, χη and ν_opt of a trajectory at its own δ.
 *
 * # Safety
 * `traj` must be a live handle; `out` a writable result or NULL.
 */
enum PrStatus pr_homodyne(const struct PrTrajectory *traj, struct PrResult *out);

/**
 * Optimises δ over ±40 MHz for the objective, then the LO frequency.
 * `params.delta_mhz` is ignored. `rel_tol <= 0` selects the default.
 *
 * # Safety
 * `params`, `pulse` and `out` must be valid pointers or NULL.
 */
enum PrStatus pr_optimize(const struct PrParams *params,
                          const struct PrPulse *pulse,
                          enum PrObjective objective,
                          double rel_tol,
                          struct PrResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHOTON_READOUT_H */
