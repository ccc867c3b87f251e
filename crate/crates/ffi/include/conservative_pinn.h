#ifndef CONSERVATIVE_PINN_H
#define CONSERVATIVE_PINN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_UNKNOWN_PROBLEM = 3,
  CP_STATUS_SINGULAR = 4,
  CP_STATUS_DIVERGED = 5,
  CP_STATUS_NUMERICAL = 6,
  CP_STATUS_PANIC = 7,
} CpStatus;

// The level set of a problem's first integrals through a fixed state.
typedef struct CpManifold CpManifold;

// A benchmark system.
typedef struct CpProblem CpProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *cp_last_error(void);

// Creates a problem with default parameters from its registered name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum CpStatus cp_problem_new(const char *name, struct CpProblem **out);

// # Safety
// `problem` must come from [`cp_problem_new`] and not be used afterwards.
void cp_problem_free(struct CpProblem *problem);

// State dimension, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t cp_problem_dim(const struct CpProblem *problem);

// Number of first integrals, or 0 for a null handle.
//
// # Safety
// `problem` must be null or a live handle.
size_t cp_problem_num_integrals(const struct CpProblem *problem);

// Writes `f(t, u)` into `out`.
//
// # Safety
// `u` and `out` must point to `n` doubles.
enum CpStatus cp_problem_rhs(const struct CpProblem *problem,
                             double t,
                             const double *u,
                             double *out,
                             size_t n);

// Writes the first integrals at `u` into `out`.
//
// # Safety
// `u` must point to `n` doubles and `out` to `m` doubles.
enum CpStatus cp_problem_invariants(const struct CpProblem *problem,
                                    const double *u,
                                    size_t n,
                                    double *out,
                                    size_t m);

// Manifold through `u0` for `problem`. The problem handle may be freed
// afterwards.
//
// # Safety
// `u0` must point to `n` doubles and `out` must be a valid pointer.
enum CpStatus cp_manifold_new(const struct CpProblem *problem,
                              const double *u0,
                              size_t n,
                              struct CpManifold **out);

// # Safety
// `manifold` must come from [`cp_manifold_new`] and not be used afterwards.
void cp_manifold_free(struct CpManifold *manifold);

// Applies `iterations` simplified Newton steps to `candidate`, writing the
// result into `out`. Zero iterations copies the candidate.
//
// # Safety
// `candidate` and `out` must point to `n` doubles.
enum CpStatus cp_project(const struct CpManifold *manifold,
                         const double *candidate,
                         size_t n,
                         size_t iterations,
                         double *out);

// Projection steps used at `epoch` of `total`, capped at `cap`. Writes 0 and
// fails when `total` is 0.
//
// # Safety
// `out` must be a valid pointer.
enum CpStatus cp_projection_schedule(size_t epoch, size_t total, size_t cap, size_t *out);

// Blend weight of the newest projection iterate at `epoch` of `total`, or
// NaN when `total` is 0.
double cp_soft_weight(size_t epoch, size_t total);

// Integrates `steps` uniform RK4 steps from `t0` to `tf`. `out` receives the
// `(steps + 1) × n` states row by row, starting with `u0`.
//
// # Safety
// `u0` must point to `n` doubles and `out` to `out_len` doubles.
enum CpStatus cp_rk4_integrate(const struct CpProblem *problem,
                               const double *u0,
                               size_t n,
                               double t0,
                               double tf,
                               size_t steps,
                               double *out,
                               size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONSERVATIVE_PINN_H */
