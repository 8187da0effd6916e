#ifndef CDISTAB_H
#define CDISTAB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CdiStatus {
  CDI_STATUS_OK = 0,
  CDI_STATUS_NULL_POINTER = 1,
  CDI_STATUS_INVALID_ARGUMENT = 2,
  CDI_STATUS_DOMAIN = 3,
  CDI_STATUS_INVALID_FUNCTION = 4,
  CDI_STATUS_QUADRATURE = 5,
  CDI_STATUS_DIVERGENCE = 6,
  CDI_STATUS_IO = 7,
  CDI_STATUS_INTERNAL = 8,
} CdiStatus;

/**
 * Built-in saturation shapes.
 */
typedef enum CdiSaturationKind {
  CDI_SATURATION_KIND_STANDARD = 0,
  CDI_SATURATION_KIND_TANH = 1,
  CDI_SATURATION_KIND_ARCTAN = 2,
} CdiSaturationKind;

/**
 * The modified saturation `S` built from some `σ`, with its tables.
 */
typedef struct CdiModified CdiModified;

/**
 * A saturation function `σ`.
 */
typedef struct CdiSaturation CdiSaturation;

/**
 * Sampled trajectory.
 */
typedef struct CdiTrajectory CdiTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, or 0 if none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cdistab_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdistab_version(void);

/**
 * Creates `σ(ξ) = g(k1 ξ)/k2` for a built-in shape `g`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CdiStatus cdistab_saturation_new(enum CdiSaturationKind kind,
                                      double k1,
                                      double k2,
                                      struct CdiSaturation **out);

/**
 * Creates a tabulated `σ` from a CSV file with header `xi,sigma`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdiStatus cdistab_saturation_from_csv(const char *path, struct CdiSaturation **out);

/**
 * # Safety
 * `s` must be null or a handle from this library, not yet freed.
 */
void cdistab_saturation_free(struct CdiSaturation *s);

/**
 * # Safety
 * `s` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_saturation_eval(const struct CdiSaturation *s, double xi, double *out);

/**
 * # Safety
 * `s` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_saturation_prime(const struct CdiSaturation *s, double xi, double *out);

/**
 * Writes `σ∞` and `σ'(0)`.
 *
 * # Safety
 * `s` must be a live handle; outputs must be valid pointers.
 */
enum CdiStatus cdistab_saturation_constants(const struct CdiSaturation *s,
                                            double *sigma_inf,
                                            double *sigma_prime_0);

/**
 * Builds `S` from `σ`. The saturation handle stays owned by the caller.
 *
 * # Safety
 * `s` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_modified_new(const struct CdiSaturation *s, struct CdiModified **out);

/**
 * # Safety
 * `m` must be null or a handle from this library, not yet freed.
 */
void cdistab_modified_free(struct CdiModified *m);

/**
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_modified_eval(const struct CdiModified *m, double xi, double *out);

/**
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_modified_prime(const struct CdiModified *m, double xi, double *out);

/**
 * `A(r) = ∫₀ʳ S`, for `r ≥ 0`.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_modified_antideriv(const struct CdiModified *m, double r, double *out);

/**
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum CdiStatus cdistab_modified_s_inf(const struct CdiModified *m, double *out);

/**
 * `V₀(z, y)` for `z`, `y` each pointing at 2 doubles.
 *
 * # Safety
 * `m` must be a live handle, `z` and `y` must point at 2 doubles, `out` valid.
 */
enum CdiStatus cdistab_v0(const struct CdiModified *m,
                          const double *z,
                          const double *y,
                          double *out);

/**
 * `dV₀/dt` along the averaged system.
 *
 * # Safety
 * As for [`cdistab_v0`].
 */
enum CdiStatus cdistab_v0_dot_t0(const struct CdiModified *m,
                                 const double *z,
                                 const double *y,
                                 double *out);

/**
 * Spectral abscissa of the linear part of the scaled loop at `eps`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CdiStatus cdistab_a_eps_abscissa(double eps, double *out);

/**
 * Integrates `x' = J₂(2π)x − e₄σ(kᵀx)` on `[0, t_end]` with fixed RK4 step `h`.
 *
 * # Safety
 * `s` live, `k` and `x0` point at 4 doubles, `out` valid.
 */
enum CdiStatus cdistab_simulate_s1(const struct CdiSaturation *s,
                                   const double *k,
                                   const double *x0,
                                   double t_end,
                                   double h,
                                   double sample_dt,
                                   struct CdiTrajectory **out);

/**
 * Integrates the rotating-frame system at `eps` from `(z, y) = x0`.
 *
 * # Safety
 * `s` live, `x0` points at 4 doubles, `out` valid.
 */
enum CdiStatus cdistab_simulate_t_eps(const struct CdiSaturation *s,
                                      double eps,
                                      const double *x0,
                                      double t_end,
                                      double h,
                                      double sample_dt,
                                      struct CdiTrajectory **out);

/**
 * Integrates the averaged system from `(z, y) = x0`.
 *
 * # Safety
 * `m` live, `x0` points at 4 doubles, `out` valid.
 */
enum CdiStatus cdistab_simulate_t0(const struct CdiModified *m,
                                   const double *x0,
                                   double t_end,
                                   double h,
                                   double sample_dt,
                                   struct CdiTrajectory **out);

/**
 * # Safety
 * `t` must be null or a handle from this library, not yet freed.
 */
void cdistab_trajectory_free(struct CdiTrajectory *t);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t cdistab_trajectory_len(const struct CdiTrajectory *t);

/**
 * State dimension; 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t cdistab_trajectory_dim(const struct CdiTrajectory *t);

/**
 * Copies sample `i`: its time into `time` and its state into `state`,
 * which must hold `dim` doubles.
 *
 * # Safety
 * `t` live; `time` valid; `state` points at `dim` writable doubles.
 */
enum CdiStatus cdistab_trajectory_sample(const struct CdiTrajectory *t,
                                         size_t i,
                                         double *time,
                                         double *state);

/**
 * Writes the trajectory as CSV.
 *
 * # Safety
 * `t` live and `path` a NUL-terminated string.
 */
enum CdiStatus cdistab_trajectory_write_csv(const struct CdiTrajectory *t, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDISTAB_H */
