#ifndef ERCONTROL_H
#define ERCONTROL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum ErcStatus {
  ERC_STATUS_OK = 0,
  ERC_STATUS_NULL_POINTER = 1,
  // Bad shapes, sigma, grids or config text.
  ERC_STATUS_INVALID_ARGUMENT = 2,
  // Non-PSD weights, singular resolvent, blow-up and similar.
  ERC_STATUS_NUMERICAL = 3,
  ERC_STATUS_UNSUPPORTED = 4,
  ERC_STATUS_BUFFER_TOO_SMALL = 5,
  // A Rust panic was caught at the boundary.
  ERC_STATUS_PANIC = 6,
} ErcStatus;

// Opaque validated model.
typedef struct ErcModel ErcModel;

// Opaque Riccati solution.
typedef struct ErcRiccati ErcRiccati;

// Monte-Carlo cost of the optimal policy.
typedef struct ErcCostReport {
  double total;
  double state_cost;
  double control_cost;
  double z_cost;
  double entropy_cost;
  double endpoint_cost;
  double std_error;
  double coe;
  uint64_t n_paths;
} ErcCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and return its full length in bytes,
// excluding the terminator. `buf` may be null to query the length.
//
// # Safety
// `buf` is null or valid for `len` writes.
size_t erc_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *erc_version(void);

// Build a model from a NUL-terminated JSON experiment config (only the
// `model` and `grid` sections are used).
//
// # Safety
// `json` is a valid C string; `out` is valid for one write.
enum ErcStatus erc_model_from_json(const char *json, struct ErcModel **out);

// Scalar model with constant coefficients, deterministic terminal value
// `xi` and a standard Gaussian prior on `[0, t_end]` with `n_steps` steps.
//
// # Safety
// `out` is valid for one write.
enum ErcStatus erc_model_scalar(double a,
                                double b,
                                double c,
                                double h,
                                double n,
                                double r,
                                double g,
                                double sigma,
                                double xi,
                                double t_end,
                                size_t n_steps,
                                struct ErcModel **out);

// # Safety
// `model` is null or a handle from this library not yet freed.
void erc_model_free(struct ErcModel *model);

// State dimension, control dimension and number of time knots.
//
// # Safety
// `model` is a live handle; the out-pointers are valid for one write.
enum ErcStatus erc_model_dims(const struct ErcModel *model,
                              size_t *state_dim,
                              size_t *control_dim,
                              size_t *n_knots);

// Relative entropy of `N(v, Sigma)` with respect to `N(0, I)`, `v` of
// length `p`, `Sigma` p x p row-major.
//
// # Safety
// `v` has `p` readable values, `sigma` has `p * p`; `out` is writable.
enum ErcStatus erc_kl_gaussian(size_t p, const double *v, const double *sigma, double *out);

// Solve the Riccati equation of `model`.
//
// # Safety
// `model` is a live handle; `out` is valid for one write.
enum ErcStatus erc_riccati_solve(const struct ErcModel *model, struct ErcRiccati **out);

// # Safety
// `riccati` is null or a handle from this library not yet freed.
void erc_riccati_free(struct ErcRiccati *riccati);

// Copy `Theta` at knot `k` (n x n, row-major) into `buf` of length `len`.
//
// # Safety
// `riccati` is a live handle; `buf` is valid for `len` writes.
enum ErcStatus erc_riccati_theta_at(const struct ErcRiccati *riccati,
                                    size_t k,
                                    double *buf,
                                    size_t len);

// Cost of exploration of the optimal policy of `model`.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum ErcStatus erc_coe(const struct ErcModel *model, double *out);

// Simulate `n_paths` paths with master seed `seed` and estimate the cost
// of the optimal policy.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum ErcStatus erc_simulate_and_cost(const struct ErcModel *model,
                                     size_t n_paths,
                                     uint64_t seed,
                                     struct ErcCostReport *out);

// Gibbs density `exp(-(2/sigma^2) h - U)`, normalized on the uniform grid
// of `n_points` points on `[a_min, a_max]`, written to `mu`.
//
// # Safety
// `h` and `u` have `n_points` readable values; `mu` has `n_points`
// writable values.
enum ErcStatus erc_gibbs_density(double a_min,
                                 double a_max,
                                 size_t n_points,
                                 const double *h,
                                 const double *u,
                                 double sigma,
                                 double *mu);

// Lagrange multiplier `beta` of the Gibbs density and the sup residual of
// the stationarity identity on the grid.
//
// # Safety
// `h` and `u` have `n_points` readable values; `beta` and `residual_sup`
// are writable.
enum ErcStatus erc_lagrange_beta(double a_min,
                                 double a_max,
                                 size_t n_points,
                                 const double *h,
                                 const double *u,
                                 double sigma,
                                 double *beta,
                                 double *residual_sup);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERCONTROL_H */
