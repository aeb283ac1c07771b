#ifndef FTSREG_H
#define FTSREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  FTSREG_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an argument out of range.
   */
  FTSREG_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Mismatched sizes between inputs.
   */
  FTSREG_STATUS_DIMENSION = 2,
  /**
   * Invalid process, schedule or kernel configuration.
   */
  FTSREG_STATUS_CONFIG = 3,
  /**
   * Ridge guard, rank failure or non-finite values.
   */
  FTSREG_STATUS_NUMERIC = 4,
  /**
   * Output buffer too small.
   */
  FTSREG_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  FTSREG_STATUS_PANIC = 6,
} FtsregStatus;

/**
 * Opaque estimated or true filter bank.
 */
typedef struct FtsregBank FtsregBank;

/**
 * Opaque `T × m` functional time series.
 */
typedef struct FtsregSeries FtsregSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The string
 * stays valid until the next call into this library on the same thread.
 */
const char *ftsreg_last_error(void);

/**
 * Library version as a static string.
 */
const char *ftsreg_version(void);

/**
 * Copies `t_len * m` row-major values into a new series.
 *
 * # Safety
 * `data` must point to `t_len * m` doubles and `out` to writable storage.
 */
FtsregStatus ftsreg_series_new(const double *data, size_t t_len, size_t m, FtsregSeries **out);

/**
 * # Safety
 * `series` must come from this library and not be used afterwards. Null is ignored.
 */
void ftsreg_series_free(FtsregSeries *series);

/**
 * Writes `T` and `m` of a series.
 *
 * # Safety
 * All pointers must be valid.
 */
FtsregStatus ftsreg_series_shape(const FtsregSeries *series, size_t *t_len, size_t *m);

/**
 * Copies the row-major values into `buf`, which must hold `T * m` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
FtsregStatus ftsreg_series_values(const FtsregSeries *series, double *buf, size_t len);

/**
 * Simulates a coupled pair. `spec_json` may be null for the default
 * process; otherwise it is a process spec in JSON. `truth` may be null.
 *
 * # Safety
 * Pointers must be valid; `x` and `y` receive new handles.
 */
FtsregStatus ftsreg_simulate(const char *spec_json,
                             size_t m,
                             size_t t_len,
                             uint64_t seed,
                             FtsregSeries **x,
                             FtsregSeries **y,
                             FtsregBank **truth);

/**
 * Fits the filter with `ζ_T = T^{-α/(α+2β)}`, `B_T = T^{-γ}` and returns
 * lags `-lags..=lags`. `kernel` is `"epanechnikov"`, `"quartic"` or null
 * for the former.
 *
 * # Safety
 * Pointers must be valid; `out` receives a new handle.
 */
FtsregStatus ftsreg_estimate(const FtsregSeries *x,
                             const FtsregSeries *y,
                             double alpha,
                             double beta,
                             double gamma,
                             size_t lags,
                             const char *kernel,
                             FtsregBank **out);

/**
 * # Safety
 * `bank` must come from this library and not be used afterwards. Null is ignored.
 */
void ftsreg_bank_free(FtsregBank *bank);

/**
 * Writes the lag radius `L` and grid size `m`.
 *
 * # Safety
 * All pointers must be valid.
 */
FtsregStatus ftsreg_bank_shape(const FtsregBank *bank, size_t *radius, size_t *m);

/**
 * Relative imaginary mass of the bank.
 *
 * # Safety
 * All pointers must be valid.
 */
FtsregStatus ftsreg_bank_imag_mass(const FtsregBank *bank, double *out);

/**
 * Squared HS distance `Σ_ℓ ‖A_ℓ − B_ℓ‖₂²` between two banks.
 *
 * # Safety
 * All pointers must be valid.
 */
FtsregStatus ftsreg_bank_distance(const FtsregBank *a, const FtsregBank *b, double *out);

/**
 * Copies the action matrix at `lag` into `re` and `im` (row-major, `m * m`
 * each). `im` may be null.
 *
 * # Safety
 * `re` (and `im` if given) must point to `len` writable doubles.
 */
FtsregStatus ftsreg_bank_operator(const FtsregBank *bank,
                                  int64_t lag,
                                  double *re,
                                  double *im,
                                  size_t len);

/**
 * Serializes the bank as JSON. Free the string with [`ftsreg_string_free`].
 *
 * # Safety
 * `out` must be valid.
 */
FtsregStatus ftsreg_bank_to_json(const FtsregBank *bank, char **out);

/**
 * # Safety
 * `s` must come from this library. Null is ignored.
 */
void ftsreg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FTSREG_H */
