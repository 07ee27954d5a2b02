#ifndef QUATWIND_H
#define QUATWIND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QwStatus {
  QW_STATUS_OK = 0,
  QW_STATUS_NULL_POINTER = 1,
  QW_STATUS_INVALID_ARGUMENT = 2,
  QW_STATUS_DOMAIN = 3,
  QW_STATUS_PATH_THROUGH_ORIGIN = 4,
  QW_STATUS_STEP_FAILURE = 5,
  QW_STATUS_ACCURACY = 6,
  QW_STATUS_IO = 7,
  QW_STATUS_PANIC = 8,
} QwStatus;

typedef enum QwGeometry {
  QW_GEOMETRY_FLAT = 0,
  QW_GEOMETRY_HP1 = 1,
  QW_GEOMETRY_HH1 = 2,
} QwGeometry;

typedef enum QwRoute {
  QW_ROUTE_TIMECHANGE = 0,
  QW_ROUTE_DIRECT = 1,
} QwRoute;

/**
 * Opaque simulation handle.
 */
typedef struct QwSampler QwSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL, or
 * 0 when there is no error.
 */
size_t qw_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qw_version(void);

/**
 * Creates a sampler. `step <= 0` selects the default grid for `horizon`.
 * `refine = 0` disables Brownian-bridge refinement.
 */
enum QwStatus qw_sampler_new(enum QwGeometry geometry,
                             double start_radius,
                             double horizon,
                             double step,
                             int32_t refine,
                             uint64_t seed,
                             struct QwSampler **out);

/**
 * Draws `n_paths` samples. `zeta` receives `3 * n_paths` doubles, row-major.
 * `clock` may be null; otherwise it receives `n_paths` values of `A_t`
 * (NaN for the direct route).
 */
enum QwStatus qw_sampler_run(const struct QwSampler *sampler,
                             enum QwRoute route,
                             size_t n_paths,
                             double *zeta,
                             double *clock);

void qw_sampler_free(struct QwSampler *sampler);

/**
 * Closed-form flat characteristic function (real, depends on `|lambda|`).
 */
enum QwStatus qw_cf_flat_exact(double lambda_norm, double t, double rho, double *out);

/**
 * Long-time hyperbolic characteristic function.
 */
enum QwStatus qw_cf_hh1_limit(double lambda_norm, double r0, double *out);

/**
 * `E[cosh^2 r(t)]` for the hyperbolic Jacobi diffusion.
 */
enum QwStatus qw_cosh2_moment(double alpha, double beta, double r0, double t, double *out);

/**
 * Long-time hyperbolic winding density at a point of norm `rho`.
 */
enum QwStatus qw_hh1_limit_density(double rho, double r0, double *out);

/**
 * Relativistic Cauchy density on R^3 at a point of norm `rho`.
 */
enum QwStatus qw_relativistic_cauchy_density(double rho, double y, double *out);

/**
 * Runs the comparison suite for a JSON config. `*report_json` receives a
 * string to release with [`qw_string_free`]; `*all_passed` is 1 or 0.
 */
enum QwStatus qw_verify(const char *config_json, char **report_json, int32_t *all_passed);

void qw_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUATWIND_H */
