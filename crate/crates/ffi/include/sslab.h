#ifndef SSLAB_H
#define SSLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SslabStatus {
  SSLAB_STATUS_OK = 0,
  SSLAB_STATUS_NULL_POINTER = 1,
  SSLAB_STATUS_INVALID_INPUT = 2,
  SSLAB_STATUS_DOMAIN = 3,
  /**
   * A small-gain or region condition fails, or a precondition is not met.
   */
  SSLAB_STATUS_CONDITION = 4,
  /**
   * The leader input leaves the certified range.
   */
  SSLAB_STATUS_UNCERTIFIED = 5,
  /**
   * Non-finite derivative during integration.
   */
  SSLAB_STATUS_NUMERIC = 6,
  SSLAB_STATUS_IO = 7,
  SSLAB_STATUS_PANIC = 8,
} SslabStatus;

typedef enum SslabLinearMode {
  SSLAB_LINEAR_MODE_ONE_DIRECTIONAL = 0,
  SSLAB_LINEAR_MODE_BIDIRECTIONAL = 1,
  SSLAB_LINEAR_MODE_ONE_SIDED = 2,
} SslabLinearMode;

/**
 * Length-uniform bound of a linear chain.
 */
typedef struct SslabBound SslabBound;

/**
 * Result of a vehicle-string verification run.
 */
typedef struct SslabPlatoonRun SslabPlatoonRun;

/**
 * Region checks of the linear chain; margins are `RHS − LHS`.
 */
typedef struct SslabLinearRegions {
  bool one_directional;
  double one_directional_margin;
  bool bidirectional;
  double bidirectional_margin;
  bool one_sided;
  double one_sided_margin;
} SslabLinearRegions;

/**
 * Vehicle-string parameters. Defaults come from [`sslab_platoon_params_default`].
 */
typedef struct SslabPlatoonParams {
  size_t n;
  double l_safe;
  double lambda;
  double v_max;
  double v_star;
  double mu;
  double q;
  double a_amp;
} SslabPlatoonParams;

typedef struct SslabVerifyOptions {
  double t_end;
  double base_step;
  bool allow_uncertified;
  bool compare_original;
} SslabVerifyOptions;

typedef struct SslabPlatoonConstants {
  double varpi;
  double x;
  double eta;
  double lambda_bound;
  double c;
  double gamma1;
  double k;
} SslabPlatoonConstants;

/**
 * Summary of a verification run. `transform_mismatch` is negative when the
 * original-coordinate comparison was skipped.
 */
typedef struct SslabPlatoonSummary {
  size_t n;
  double k;
  double lambda_bound;
  double leader_peak;
  bool certified_regime;
  double min_slack;
  double min_budget_slack;
  bool collision_free;
  bool speed_bounds_ok;
  double min_gap;
  double transform_mismatch;
  bool completed;
} SslabPlatoonSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length including the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t sslab_last_error(char *buf, size_t len);

/**
 * Static NUL-terminated version string.
 */
const char *sslab_version(void);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum SslabStatus sslab_linear_regions(double a, double b, double k, struct SslabLinearRegions *out);

/**
 * Builds the certified bound of the linear chain of length `n`.
 *
 * # Safety
 * `out` must be null or valid for writes. On success `*out` owns a handle.
 */
enum SslabStatus sslab_linear_bound_new(double a,
                                        double b,
                                        double k,
                                        enum SslabLinearMode mode,
                                        size_t n,
                                        struct SslabBound **out);

/**
 * # Safety
 * `bound` must be null or a handle from [`sslab_linear_bound_new`].
 */
void sslab_bound_free(struct SslabBound *bound);

/**
 * Slopes of the bound in front of the upstream and downstream input norms.
 *
 * # Safety
 * `bound` must be a live handle; `a1` and `a2` must be null or writable.
 */
enum SslabStatus sslab_bound_slopes(const struct SslabBound *bound, double *a1, double *a2);

/**
 * Initial-condition term for scalar initial states `xi[0..n]`.
 *
 * # Safety
 * `bound` must be a live handle, `xi` must point to `n` values, `out` writable.
 */
enum SslabStatus sslab_bound_qn(const struct SslabBound *bound,
                                const double *xi,
                                size_t n,
                                double *out);

struct SslabPlatoonParams sslab_platoon_params_default(void);

struct SslabVerifyOptions sslab_verify_options_default(void);

/**
 * # Safety
 * `params` and `out` must be null or valid.
 */
enum SslabStatus sslab_platoon_constants(const struct SslabPlatoonParams *params,
                                         struct SslabPlatoonConstants *out);

/**
 * Runs the vehicle string from gaps `s[0..n]` and speeds `v[0..n]` under the
 * leader input `y0` sampled every `dt` from `t = 0` (`y0_len` samples, at
 * least up to `opts.t_end`).
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable. On
 * success `*out` owns a handle.
 */
enum SslabStatus sslab_platoon_verify(const struct SslabPlatoonParams *params,
                                      const double *s,
                                      const double *v,
                                      const double *y0,
                                      size_t y0_len,
                                      double dt,
                                      const struct SslabVerifyOptions *opts,
                                      struct SslabPlatoonRun **out);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum SslabStatus sslab_platoon_run_summary(const struct SslabPlatoonRun *run,
                                           struct SslabPlatoonSummary *out);

/**
 * Report of the run as NUL-terminated JSON, copied like [`sslab_last_error`].
 *
 * # Safety
 * `run` must be a live handle; `buf` null or valid for `len` bytes.
 */
size_t sslab_platoon_run_report_json(const struct SslabPlatoonRun *run, char *buf, size_t len);

/**
 * # Safety
 * `run` must be null or a handle from [`sslab_platoon_verify`].
 */
void sslab_platoon_run_free(struct SslabPlatoonRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSLAB_H */
