#ifndef MODFIELD_H
#define MODFIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Integration failure, overflow, non-convergence or divergence.
   */
  MF_STATUS_NUMERICAL = 3,
  MF_STATUS_IO = 4,
  MF_STATUS_PANIC = 5,
} MfStatus;

/**
 * A vector field `g(y, h)` together with the base system it modifies.
 */
typedef struct MfField MfField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates the pendulum field `(-sin y2, y1)`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
MfStatus mf_field_pendulum(MfField **out);

/**
 * Creates the free rigid body with moments of inertia `i1, i2, i3`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
MfStatus mf_field_rigid_body(double i1, double i2, double i3, MfField **out);

/**
 * Creates the analytic modified field of order `k` of `base` for
 * `scheme` (`euler`, `rk2`; `midpoint` gives the exact modified field and
 * ignores `k`).
 *
 * # Safety
 * `base` must be a live handle, `scheme` a NUL-terminated string and `out`
 * valid for a pointer write.
 */
MfStatus mf_field_truncated(const MfField *base, const char *scheme, uintptr_t k, MfField **out);

/**
 * Loads a learned model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for a pointer write.
 */
MfStatus mf_field_load(const char *path, MfField **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void mf_field_free(MfField *field);

/**
 * State dimension, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
uintptr_t mf_field_dim(const MfField *field);

/**
 * Writes `g(y, h)` to `out`; both buffers hold `dim` values.
 *
 * # Safety
 * `y` and `out` must point to `dim` doubles.
 */
MfStatus mf_field_eval(const MfField *field, const double *y, uintptr_t dim, double h, double *out);

/**
 * Takes `n_steps` steps of size `h` with `scheme` (`euler`, `rk2`,
 * `rk2_heun`, `midpoint`, or `dopri5` at a fixed step) on the field.
 * `out` receives the `n_steps + 1` states row by row, starting with `y0`.
 *
 * # Safety
 * `y0` must point to `dim` doubles and `out` to `(n_steps + 1) * dim`.
 */
MfStatus mf_integrate(const MfField *field,
                      const char *scheme,
                      const double *y0,
                      uintptr_t dim,
                      double h,
                      uintptr_t n_steps,
                      double *out);

/**
 * Exact flow of the handle's base system over time `t` at tolerance `tol`.
 *
 * # Safety
 * `y0` and `out` must point to `dim` doubles.
 */
MfStatus mf_reference_flow(const MfField *field,
                           const double *y0,
                           uintptr_t dim,
                           double t,
                           double tol,
                           double *out);

/**
 * Least-squares slope of `log error` against `log h` over `n` pairs.
 *
 * # Safety
 * `errors` and `hs` must point to `n` doubles, `out` to one.
 */
MfStatus mf_order_estimate(const double *errors, const double *hs, uintptr_t n, double *out);

/**
 * Copies the last error message of this thread into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns its full length in
 * bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t mf_last_error(char *buf, uintptr_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODFIELD_H */
