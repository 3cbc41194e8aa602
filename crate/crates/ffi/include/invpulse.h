#ifndef INVPULSE_H
#define INVPULSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Codes 2 to 4 match the command-line exit codes.
 */
typedef enum InvpulseStatus {
  INVPULSE_STATUS_OK = 0,
  /**
   * Bad argument, configuration or input document.
   */
  INVPULSE_STATUS_INVALID = 2,
  /**
   * Integration, positivity or fit failure.
   */
  INVPULSE_STATUS_NUMERICAL = 3,
  /**
   * Coefficients violate an endpoint condition.
   */
  INVPULSE_STATUS_CONSTRAINT = 4,
  INVPULSE_STATUS_NULL_POINTER = 5,
  /**
   * Output buffer shorter than required.
   */
  INVPULSE_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  INVPULSE_STATUS_PANIC = 7,
} InvpulseStatus;

/**
 * Ground level, numbered as in the library's six-level basis.
 */
typedef enum InvpulseGround {
  INVPULSE_GROUND_AUX = 0,
  INVPULSE_GROUND_ONE = 1,
  INVPULSE_GROUND_ZERO = 2,
} InvpulseGround;

/**
 * Coefficients of one pulse pair.
 */
typedef struct InvpulseCoefficients InvpulseCoefficients;

/**
 * Level system, decoherence, ensemble and integrator settings.
 */
typedef struct InvpulseModel InvpulseModel;

/**
 * Sampled envelopes of one pulse pair.
 */
typedef struct InvpulsePulses InvpulsePulses;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *invpulse_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *invpulse_version(void);

/**
 * Published coefficients: `case` is 1, 2 or 3. Endpoint conditions are
 * re-solved exactly from the first six coefficients.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum InvpulseStatus invpulse_coefficients_table1(uint32_t case_,
                                                 double phi,
                                                 struct InvpulseCoefficients **out);

/**
 * Coefficients from all eight values, which must satisfy both endpoint conditions.
 *
 * # Safety
 * `a` must point to 8 readable doubles; `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_coefficients_new(const double *a,
                                              double t_f,
                                              double theta,
                                              double phi,
                                              struct InvpulseCoefficients **out);

/**
 * Coefficients from the six free values; the last two are solved from the endpoint conditions.
 *
 * # Safety
 * `free` must point to 6 readable doubles; `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_coefficients_from_free(const double *free,
                                                    double t_f,
                                                    double theta,
                                                    double phi,
                                                    struct InvpulseCoefficients **out);

/**
 * Copies the eight coefficients into `a`.
 *
 * # Safety
 * `c` must be a live handle and `a` must point to 8 writable doubles.
 */
enum InvpulseStatus invpulse_coefficients_get(const struct InvpulseCoefficients *c, double *a);

/**
 * # Safety
 * `c` must be null or a handle not freed before.
 */
void invpulse_coefficients_free(struct InvpulseCoefficients *c);

/**
 * Samples the pulse pair on `n_samples` points over its duration.
 *
 * # Safety
 * `c` must be a live handle; `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_pulses_synthesize(const struct InvpulseCoefficients *c,
                                               size_t n_samples,
                                               struct InvpulsePulses **out);

/**
 * Time-reversed, sign-flipped copy of `p`.
 *
 * # Safety
 * `p` must be a live handle; `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_pulses_reverse(const struct InvpulsePulses *p,
                                            struct InvpulsePulses **out);

/**
 * Number of samples per envelope, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t invpulse_pulses_len(const struct InvpulsePulses *p);

/**
 * Sample spacing in seconds and duration in seconds.
 *
 * # Safety
 * `p` must be a live handle; `dt` and `t_f` must be writable or null.
 */
enum InvpulseStatus invpulse_pulses_timing(const struct InvpulsePulses *p, double *dt, double *t_f);

/**
 * Copies both envelopes (rad/s) into caller buffers of `capacity` doubles each.
 *
 * # Safety
 * `p` must be a live handle; `omega_p` and `omega_s` must each hold `capacity` writable doubles.
 */
enum InvpulseStatus invpulse_pulses_copy(const struct InvpulsePulses *p,
                                         double *omega_p,
                                         double *omega_s,
                                         size_t capacity);

/**
 * Largest normalized residual of the invariant condition for `p` against the
 * construction described by `c`, with invariant frequency `omega0` (rad/s).
 *
 * # Safety
 * `p` and `c` must be live handles; `residual` must be writable.
 */
enum InvpulseStatus invpulse_pulses_invariant_residual(const struct InvpulsePulses *p,
                                                       const struct InvpulseCoefficients *c,
                                                       double omega0,
                                                       double *residual);

/**
 * # Safety
 * `p` must be null or a handle not freed before.
 */
void invpulse_pulses_free(struct InvpulsePulses *p);

/**
 * Built-in Pr:YSO model with optical T2 `t2_optical` seconds and `n_members`
 * ensemble members (0 for the default).
 *
 * # Safety
 * `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_model_default(double t2_optical,
                                           size_t n_members,
                                           struct InvpulseModel **out);

/**
 * Model from a run-configuration document (TOML text).
 *
 * # Safety
 * `toml` must be a nul-terminated string; `out` as for [`invpulse_coefficients_table1`].
 */
enum InvpulseStatus invpulse_model_from_config(const char *toml, struct InvpulseModel **out);

/**
 * # Safety
 * `m` must be null or a handle not freed before.
 */
void invpulse_model_free(struct InvpulseModel *m);

/**
 * Ensemble-averaged fidelity of the state reached from `initial` with the
 * target of `target` (its `theta` and `phi`). `initial` is an [`InvpulseGround`] value.
 *
 * # Safety
 * `m`, `p` and `target` must be live handles; `fidelity` must be writable.
 */
enum InvpulseStatus invpulse_transfer_fidelity(const struct InvpulseModel *m,
                                               const struct InvpulsePulses *p,
                                               const struct InvpulseCoefficients *target,
                                               uint32_t initial,
                                               double *fidelity);

/**
 * Population experiment with the published forward pulses: writes `F(N)` for
 * `N = 1..=n_max` into `fidelities`, read after the model's standard wait and
 * normalized to the qubit population.
 *
 * # Safety
 * `m` must be a live handle; `fidelities` must hold `n_max` writable doubles.
 */
enum InvpulseStatus invpulse_population_protocol(const struct InvpulseModel *m,
                                                 size_t n_max,
                                                 double *fidelities);

/**
 * Per-transfer fidelity `sqrt(F(N + 2) / F(N))` averaged over `N = lo..=hi`,
 * with the sample spread of the individual ratios.
 *
 * # Safety
 * `fidelities` must hold `len` readable doubles; `mean` and `spread` must be writable.
 */
enum InvpulseStatus invpulse_extract_pair_fidelity(const double *fidelities,
                                                   size_t len,
                                                   size_t lo,
                                                   size_t hi,
                                                   double *mean,
                                                   double *spread);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INVPULSE_H */
