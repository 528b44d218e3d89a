#ifndef ENMKF_H
#define ENMKF_H

/* Generated by cbindgen from the enmkf-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The numeric values of the error classes match the exit
 * codes of the command-line tool.
 */
typedef enum EnmkfStatus {
  ENMKF_STATUS_OK = 0,
  ENMKF_STATUS_NULL_POINTER = 1,
  ENMKF_STATUS_CONFIG = 2,
  ENMKF_STATUS_DATA = 3,
  ENMKF_STATUS_NUMERICAL = 4,
  ENMKF_STATUS_PANIC = 5,
} EnmkfStatus;

/**
 * Opaque filter handle.
 */
typedef struct EnmkfFilter EnmkfFilter;

/**
 * One measurement minute.
 */
typedef struct EnmkfRecord {
  int64_t t_min;
  double t_int;
  double t_ext;
  double f_int;
  double f_ext;
} EnmkfRecord;

/**
 * Ensemble summary after assimilating one record. Parameters are in
 * physical units; fluxes in W/m².
 */
typedef struct EnmkfEstimate {
  int64_t t_min;
  double r_mean;
  double r_std;
  double rho_c_mean;
  double rho_c_std;
  double f_int_mean;
  double f_ext_mean;
  double f_int_var;
  double f_ext_var;
} EnmkfEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a filter.
 *
 * `config_json` is a NUL-terminated run configuration, or NULL for the
 * defaults. `calibration` points to `calibration_len` records; the first one
 * sets the initial temperatures and the series is used to estimate the
 * boundary-temperature process noise when configured to do so. The records
 * are not assimilated. On success `*out` receives a handle to release with
 * [`enmkf_filter_free`].
 *
 * # Safety
 * `config_json` must be NULL or a valid C string, `calibration` must point to
 * `calibration_len` readable records and `out` must be writable.
 */
enum EnmkfStatus enmkf_filter_new(const char *config_json,
                                  const struct EnmkfRecord *calibration,
                                  size_t calibration_len,
                                  struct EnmkfFilter **out);

/**
 * Assimilates one record and writes the resulting summary to `*estimate`.
 *
 * # Safety
 * `filter` must come from [`enmkf_filter_new`]; `record` and `estimate` must
 * be valid pointers.
 */
enum EnmkfStatus enmkf_filter_step(struct EnmkfFilter *filter,
                                   const struct EnmkfRecord *record,
                                   struct EnmkfEstimate *estimate);

/**
 * Ensemble size of the filter, or 0 for NULL.
 *
 * # Safety
 * `filter` must be NULL or come from [`enmkf_filter_new`].
 */
size_t enmkf_filter_ensemble_size(const struct EnmkfFilter *filter);

/**
 * Releases a filter. NULL is ignored.
 *
 * # Safety
 * `filter` must be NULL or come from [`enmkf_filter_new`] and not be used
 * afterwards.
 */
void enmkf_filter_free(struct EnmkfFilter *filter);

/**
 * Boundary fluxes `(F_int, F_ext)` of a node temperature profile
 * `[T_int, T_1, ..., T_ext]` of length `n_nodes` for thermal resistance `r`.
 *
 * # Safety
 * `nodes` must point to `n_nodes` readable values; `f_int` and `f_ext` must
 * be writable.
 */
enum EnmkfStatus enmkf_wall_flux(const double *nodes,
                                 size_t n_nodes,
                                 double r,
                                 double *f_int,
                                 double *f_ext);

/**
 * Message of the last error on this thread; empty after a success. The
 * pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *enmkf_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *enmkf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENMKF_H */
