#ifndef CONFORMAL_KIT_H
#define CONFORMAL_KIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Betting function of a monitor.
typedef enum CkBetting {
  CK_BETTING_MIXTURE = 0,
  CK_BETTING_POWER = 1,
} CkBetting;

// Result code of every exported function.
typedef enum CkStatus {
  CK_STATUS_OK = 0,
  CK_STATUS_NULL_POINTER = 1,
  CK_STATUS_INVALID_ARGUMENT = 2,
  CK_STATUS_DATA_ERROR = 3,
  CK_STATUS_NUMERIC_ERROR = 4,
  CK_STATUS_PANIC = 5,
} CkStatus;

// Opaque split-conformal calibration.
typedef struct CkCalibration CkCalibration;

// Opaque per-class (Mondrian) calibration.
typedef struct CkMondrian CkMondrian;

// Opaque exchangeability monitor.
typedef struct CkMonitor CkMonitor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error of this thread into `buf` (nul-terminated,
// truncated to `len`). Returns the full message length without the nul, or
// 0 when there is no error.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t ck_last_error_message(char *buf, size_t len);

// Order statistic at rank `ceil(n * level)` of `values`.
//
// # Safety
// `values` must hold `n` doubles; `out` must be writable.
enum CkStatus ck_empirical_quantile(const double *values, size_t n, double level, double *out);

// Regularized incomplete beta function.
//
// # Safety
// `out` must be writable.
enum CkStatus ck_reg_inc_beta(double x, double a, double b, double *out);

// Central `band` interval of the coverage attained given a calibration set
// of size `n`.
//
// # Safety
// `lo` and `hi` must be writable.
enum CkStatus ck_beta_coverage_band(size_t n, double alpha, double band, double *lo, double *hi);

// Mixture betting wealth after the p-values `p[0..n]`.
//
// # Safety
// `p` must hold `n` doubles; `out` must be writable.
enum CkStatus ck_mixture_wealth(const double *p, size_t n, double *out);

// # Safety
// `scores` must hold `n` doubles; `out` must be writable.
enum CkStatus ck_calibration_new(const double *scores,
                                 size_t n,
                                 double alpha,
                                 bool strict,
                                 struct CkCalibration **out);

// Critical score; `+inf` when the set is too small in strict mode.
//
// # Safety
// `handle` from [`ck_calibration_new`]; `out` writable.
enum CkStatus ck_calibration_critical_score(const struct CkCalibration *handle, double *out);

// # Safety
// `handle` from [`ck_calibration_new`]; `out` writable.
enum CkStatus ck_calibration_p_value(const struct CkCalibration *handle, double score, double *out);

// # Safety
// `handle` must be null or from [`ck_calibration_new`], freed once.
void ck_calibration_free(struct CkCalibration *handle);

// `classes` are 0-based and below `n_classes`.
//
// # Safety
// `scores` and `classes` must hold `n` values; `out` writable.
enum CkStatus ck_mondrian_new(const double *scores,
                              const size_t *classes,
                              size_t n,
                              size_t n_classes,
                              double alpha,
                              bool strict,
                              struct CkMondrian **out);

// # Safety
// `handle` from [`ck_mondrian_new`]; `out` writable.
enum CkStatus ck_mondrian_critical_score(const struct CkMondrian *handle,
                                         size_t class_,
                                         double *out);

// # Safety
// `handle` must be null or from [`ck_mondrian_new`], freed once.
void ck_mondrian_free(struct CkMondrian *handle);

// `epsilon` is read only for power betting. With `online` set, each
// observed score joins the calibration set.
//
// # Safety
// `cal_scores` must hold `n` doubles; `out` writable.
enum CkStatus ck_monitor_new(const double *cal_scores,
                             size_t n,
                             enum CkBetting betting,
                             double epsilon,
                             double threshold,
                             bool online,
                             uint64_t seed,
                             struct CkMonitor **out);

// Feeds one score. Any of the output pointers may be null.
//
// # Safety
// `handle` from [`ck_monitor_new`]; non-null outputs writable.
enum CkStatus ck_monitor_observe(struct CkMonitor *handle,
                                 double score,
                                 double *p_value,
                                 double *wealth,
                                 bool *alert);

// # Safety
// `handle` must be null or from [`ck_monitor_new`], freed once.
void ck_monitor_free(struct CkMonitor *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFORMAL_KIT_H */
