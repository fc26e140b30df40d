/* C interface for the farcast trajectory-forecasting library. */

#ifndef FARCAST_H
#define FARCAST_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define FC_OK 0

// A required pointer argument was null.
#define FC_ERR_NULL_ARGUMENT -1

// A string argument was not valid UTF-8.
#define FC_ERR_UTF8 -2

// The filesystem failed or a path does not exist.
#define FC_ERR_IO -3

// A stored file is malformed, has the wrong size, or an unknown schema.
#define FC_ERR_FORMAT -4

// Arguments or configuration are invalid (shapes, ranges, empty inputs).
#define FC_ERR_INVALID -5

// A numeric failure: divergence or non-finite values.
#define FC_ERR_NUMERIC -6

// An integer count overflowed the requested width.
#define FC_ERR_OVERFLOW -7

// A verification ran to completion but exceeded its tolerance.
#define FC_ERR_TOLERANCE -8

// An internal panic was caught at the boundary.
#define FC_ERR_PANIC -9

// Opaque handle to a trained forecaster.
typedef struct FcModel FcModel;

// Opaque handle to a stored optimizer trajectory.
typedef struct FcTrajectory FcTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fc_version(void);

// Message for the most recent failure on this thread (empty if none).
// The pointer stays valid until the next farcast call on this thread.
const char *fc_last_error_message(void);

// Load a trajectory directory (manifest.json + payload files) into a new
// handle written to `out`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
int fc_trajectory_load(const char *dir, struct FcTrajectory **out);

// Import an externally produced trajectory given the path to its manifest
// file; the handle is written to `out`.
//
// # Safety
// `manifest` must be a NUL-terminated string; `out` must be valid.
int fc_trajectory_import(const char *manifest, struct FcTrajectory **out);

// Persist a trajectory into `dir` (created if needed).
//
// # Safety
// `traj` must be a live handle from this library; `dir` a C string.
int fc_trajectory_save(const struct FcTrajectory *traj, const char *dir);

// Release a trajectory handle. Null is a no-op.
//
// # Safety
// `traj` must be null or an owned handle not freed before.
void fc_trajectory_free(struct FcTrajectory *traj);

// Dimension of the tracked weight vector.
//
// # Safety
// `traj` must be a live handle; `out` a valid pointer.
int fc_trajectory_dim(const struct FcTrajectory *traj, size_t *out);

// Number of recorded steps (updates + 1).
//
// # Safety
// `traj` must be a live handle; `out` a valid pointer.
int fc_trajectory_steps(const struct FcTrajectory *traj, size_t *out);

// Copy the full weight matrix, row-major (`steps` x `dim`), into `out`.
// `len` must equal `steps * dim`.
//
// # Safety
// `traj` must be a live handle; `out` must point to `len` writable doubles.
int fc_trajectory_copy_weights(const struct FcTrajectory *traj, double *out, size_t len);

// Load a model directory (model.json + params.f64le) into a new handle
// written to `out`.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be valid.
int fc_model_load(const char *dir, struct FcModel **out);

// Persist a model into `dir` (created if needed).
//
// # Safety
// `model` must be a live handle; `dir` a C string.
int fc_model_save(const struct FcModel *model, const char *dir);

// Release a model handle. Null is a no-op.
//
// # Safety
// `model` must be null or an owned handle not freed before.
void fc_model_free(struct FcModel *model);

// Observed steps the model expects per window.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
int fc_model_n_in(const struct FcModel *model, size_t *out);

// Steps the model predicts per window.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
int fc_model_m_out(const struct FcModel *model, size_t *out);

// Predict the horizon for `dim` independent channels.
//
// `inputs` is row-major `dim` x `n_in` (the observed block); `out` receives
// row-major `dim` x `m_out` and `out_len` must equal `dim * m_out`.
//
// # Safety
// `model` must be a live handle; `inputs` must hold `dim * n_in` doubles;
// `out` must have room for `out_len` doubles.
int fc_model_predict(const struct FcModel *model,
                     const double *inputs,
                     size_t dim,
                     size_t n_in,
                     double *out,
                     size_t out_len);

// FLOPs for producing `m` optimizer steps of a `d`-dimensional weight
// vector iteratively; fails with `FC_ERR_OVERFLOW` beyond 64 bits.
//
// # Safety
// `out` must be a valid pointer.
int fc_flops_iterative(uint64_t m, uint64_t d, uint64_t *out);

// FLOPs for forecasting the same steps with a trained last-step model
// (`4dm`, or `4d` when `last_only`); overflow handling as above.
//
// # Safety
// `out` must be a valid pointer.
int fc_flops_farcast(uint64_t m, uint64_t d, bool last_only, uint64_t *out);

// Simulate `trials` random scalar-affine schedules (scales uniform in
// (-max_scale, max_scale)), build the exact forecaster for each, and write
// the worst absolute prediction error to `out_max_error`. Returns `FC_OK`
// when the error is below the library tolerance, `FC_ERR_TOLERANCE` when
// the check ran but failed it.
//
// # Safety
// `out_max_error` must be a valid pointer.
int fc_verify_prop1(size_t n,
                    size_t m,
                    size_t trials,
                    uint64_t seed,
                    double max_scale,
                    double *out_max_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FARCAST_H */
