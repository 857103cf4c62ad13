#ifndef OPTSENSE_H
#define OPTSENSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OptsenseInitialState {
  OPTSENSE_INITIAL_STATE_F1 = 0,
  OPTSENSE_INITIAL_STATE_CHI1 = 1,
  OPTSENSE_INITIAL_STATE_E_PLUS_CHI1 = 2,
} OptsenseInitialState;

/**
 * Parameter a derivative is taken with respect to.
 */
typedef enum OptsenseParameter {
  OPTSENSE_PARAMETER_COUPLING = 0,
  OPTSENSE_PARAMETER_DETUNING = 1,
} OptsenseParameter;

typedef enum OptsenseStatus {
  OPTSENSE_STATUS_OK = 0,
  OPTSENSE_STATUS_NULL_POINTER = 1,
  OPTSENSE_STATUS_BUFFER_SIZE = 2,
  OPTSENSE_STATUS_SHAPE = 3,
  OPTSENSE_STATUS_VALIDATION = 4,
  OPTSENSE_STATUS_NUMERICAL = 5,
  OPTSENSE_STATUS_UNSUPPORTED = 6,
  OPTSENSE_STATUS_FIT = 7,
  OPTSENSE_STATUS_CONFIG = 8,
  OPTSENSE_STATUS_IO = 9,
  OPTSENSE_STATUS_PANIC = 10,
} OptsenseStatus;

/**
 * Opaque three-level model: coupling, detuning and decay rate in fs⁻¹.
 */
typedef struct OptsenseParams OptsenseParams;

/**
 * Opaque QFI time series with its peak and window.
 */
typedef struct OptsenseQfiSeries OptsenseQfiSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *optsense_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *optsense_version(void);

/**
 * Creates a model from rates in fs⁻¹.
 *
 * # Safety
 * `out_params` must be a valid pointer to writable storage for one handle.
 */
enum OptsenseStatus optsense_params_new(double g,
                                        double delta,
                                        double gamma_e,
                                        struct OptsenseParams **out_params);

/**
 * Creates a model from energies in eV.
 *
 * # Safety
 * `out_params` must be a valid pointer to writable storage for one handle.
 */
enum OptsenseStatus optsense_params_from_ev(double g_ev,
                                            double delta_ev,
                                            double gamma_e_ev,
                                            struct OptsenseParams **out_params);

/**
 * Reads back the rates of a model in fs⁻¹.
 *
 * # Safety
 * `params` must come from this library; the out pointers must be valid.
 */
enum OptsenseStatus optsense_params_get(const struct OptsenseParams *params,
                                        double *g,
                                        double *delta,
                                        double *gamma_e);

/**
 * Frees a model. Null is ignored.
 *
 * # Safety
 * `params` must be null or a handle from this library not yet freed.
 */
void optsense_params_free(struct OptsenseParams *params);

/**
 * Closed-form ρ(t) for the probe started in |f⟩, row-major over (e, f, s).
 * Fails with `Unsupported` at non-zero detuning.
 *
 * # Safety
 * `re` and `im` must each point to 9 writable doubles.
 */
enum OptsenseStatus optsense_analytic_rho(const struct OptsenseParams *params,
                                          double t,
                                          double *re,
                                          double *im);

/**
 * F(t) on `n_points` evenly spaced times for the probe started in |f⟩.
 * The window is the interval where F exceeds `threshold` times its peak.
 *
 * # Safety
 * `params` must come from this library; `out_series` must be valid.
 */
enum OptsenseStatus optsense_qfi_series(const struct OptsenseParams *params,
                                        double t_start,
                                        double t_end,
                                        size_t n_points,
                                        enum OptsenseParameter wrt,
                                        double threshold,
                                        struct OptsenseQfiSeries **out_series);

/**
 * Number of samples in a series; 0 for null.
 *
 * # Safety
 * `series` must be null or a live handle from this library.
 */
size_t optsense_qfi_series_len(const struct OptsenseQfiSeries *series);

/**
 * Copies times and values into caller buffers of exactly `len` entries.
 *
 * # Safety
 * `times` and `values` must each point to `len` writable doubles.
 */
enum OptsenseStatus optsense_qfi_series_copy(const struct OptsenseQfiSeries *series,
                                             double *times,
                                             double *values,
                                             size_t len);

/**
 * Refined peak time (fs) and peak value.
 *
 * # Safety
 * `series` must be a live handle; the out pointers must be valid.
 */
enum OptsenseStatus optsense_qfi_series_peak(const struct OptsenseQfiSeries *series,
                                             double *peak_time,
                                             double *peak_value);

/**
 * Measurement window in fs.
 *
 * # Safety
 * `series` must be a live handle; the out pointers must be valid.
 */
enum OptsenseStatus optsense_qfi_series_window(const struct OptsenseQfiSeries *series,
                                               double *lo,
                                               double *hi);

/**
 * Frees a series. Null is ignored.
 *
 * # Safety
 * `series` must be null or a handle from this library not yet freed.
 */
void optsense_qfi_series_free(struct OptsenseQfiSeries *series);

/**
 * Peak of F(t) for g with `n_probes` probes sharing one lossy level.
 *
 * # Safety
 * The out pointers must be valid.
 */
enum OptsenseStatus optsense_nprobe_peak(size_t n_probes,
                                         double g,
                                         double gamma_e,
                                         enum OptsenseInitialState initial,
                                         double t_start,
                                         double t_end,
                                         size_t n_points,
                                         double *peak_time,
                                         double *peak_value);

/**
 * Least-squares estimate of g from measured |f⟩ frequencies at `times`.
 * `converged` is 0 when the estimate sits on a bound.
 *
 * # Safety
 * `times` and `freqs` must point to `len` doubles; out pointers valid.
 */
enum OptsenseStatus optsense_fit_g(const double *times,
                                   const double *freqs,
                                   size_t len,
                                   double gamma_e,
                                   double g_lo,
                                   double g_hi,
                                   double *g_hat,
                                   double *sse,
                                   int32_t *converged);

/**
 * Propagated error of the |f⟩ population readout and 1/√F on
 * `n_points` evenly spaced times. Infinite entries mark times where the
 * readout or the state carries no information.
 *
 * # Safety
 * `delta` and `inv_sqrt_f` must each point to `n_points` writable doubles.
 */
enum OptsenseStatus optsense_error_propagation(const struct OptsenseParams *params,
                                               double t_start,
                                               double t_end,
                                               size_t n_points,
                                               enum OptsenseParameter wrt,
                                               double *delta,
                                               double *inv_sqrt_f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTSENSE_H */
