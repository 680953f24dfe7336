#ifndef MRS_REPRO_H
#define MRS_REPRO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MrsMethod {
  MRS_METHOD_TDFIT_A = 0,
  MRS_METHOD_TDFIT_B = 1,
  MRS_METHOD_FREQFIT_A = 2,
  MRS_METHOD_FREQFIT_B = 3,
} MrsMethod;

/**
 * Result code of every fallible call.
 */
typedef enum MrsStatus {
  MRS_STATUS_OK = 0,
  MRS_STATUS_NULL_POINTER = 1,
  MRS_STATUS_INVALID_ARGUMENT = 2,
  MRS_STATUS_IO = 3,
  MRS_STATUS_FIT_FAILED = 4,
  MRS_STATUS_STATS_FAILED = 5,
  /**
   * A Rust panic was caught at the boundary; the handle arguments should
   * be considered unusable.
   */
  MRS_STATUS_INTERNAL = 6,
} MrsStatus;

/**
 * Standard acquisition: spectrometer context, metabolite basis and
 * macromolecule model.
 */
typedef struct MrsAcquisition MrsAcquisition;

typedef struct MrsFid MrsFid;

typedef struct MrsFitResult MrsFitResult;

typedef struct MrsBlandAltman {
  double bias;
  double sd_diff;
  double ci95;
  double z95;
} MrsBlandAltman;

typedef struct MrsWilcoxon {
  size_t n;
  double w_plus;
  double z;
  double p_value;
  bool exact;
} MrsWilcoxon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *mrs_last_error_message(void);

size_t mrs_metabolite_count(void);

/**
 * Static, NUL-terminated name, or null for an out-of-range index.
 */
const char *mrs_metabolite_name(size_t index);

enum MrsStatus mrs_acquisition_standard(struct MrsAcquisition **out);

/**
 * Number of time-domain points a FID must have to be fitted.
 */
size_t mrs_acquisition_n_points(const struct MrsAcquisition *acq);

double mrs_acquisition_dwell_time(const struct MrsAcquisition *acq);

void mrs_acquisition_free(struct MrsAcquisition *acq);

/**
 * Copy `n` complex samples given as separate real and imaginary arrays.
 */
enum MrsStatus mrs_fid_new(const double *re,
                           const double *im,
                           size_t n,
                           double dwell_time,
                           struct MrsFid **out);

enum MrsStatus mrs_fid_read(const char *path, struct MrsFid **out);

enum MrsStatus mrs_fid_write(const struct MrsFid *fid, const char *path);

size_t mrs_fid_len(const struct MrsFid *fid);

/**
 * Copy the samples into caller buffers of capacity `n`, which must be at
 * least [`mrs_fid_len`].
 */
enum MrsStatus mrs_fid_samples(const struct MrsFid *fid, double *re, double *im, size_t n);

void mrs_fid_free(struct MrsFid *fid);

/**
 * Fit `fid` with a preset method. `seed` drives the multi-start draws of
 * the time-domain engine and is ignored by the frequency-domain one.
 */
enum MrsStatus mrs_fit(const struct MrsAcquisition *acq,
                       const struct MrsFid *fid,
                       enum MrsMethod method,
                       uint64_t seed,
                       struct MrsFitResult **out);

enum MrsStatus mrs_fit_concentration(const struct MrsFitResult *res,
                                     size_t metabolite_index,
                                     double *out);

/**
 * Cramér-Rao standard deviation; NaN when the bound is unavailable.
 */
enum MrsStatus mrs_fit_crb_sd(const struct MrsFitResult *res, size_t metabolite_index, double *out);

bool mrs_fit_converged(const struct MrsFitResult *res);

double mrs_fit_final_cost(const struct MrsFitResult *res);

size_t mrs_fit_iterations(const struct MrsFitResult *res);

void mrs_fit_result_free(struct MrsFitResult *res);

/**
 * Bland-Altman agreement of two paired arrays of per-signal means.
 */
enum MrsStatus mrs_bland_altman(const double *a,
                                const double *b,
                                size_t n,
                                struct MrsBlandAltman *out);

/**
 * Two-sided Wilcoxon signed-rank test of paired samples.
 */
enum MrsStatus mrs_wilcoxon(const double *x, const double *y, size_t n, struct MrsWilcoxon *out);

/**
 * Inter-execution RMSE of a row-major `n_signals` x `n_executions` table of
 * concentrations: residuals from each signal's own mean, pooled.
 */
enum MrsStatus mrs_inter_execution_rmse(const double *values,
                                        size_t n_signals,
                                        size_t n_executions,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRS_REPRO_H */
