#ifndef PSEUDOMODE_H
#define PSEUDOMODE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_DIMENSION_MISMATCH = 3,
  PM_STATUS_TRUNCATION_BREACH = 4,
  PM_STATUS_NUMERICAL = 5,
  PM_STATUS_CONFIG = 6,
  PM_STATUS_UNSUPPORTED = 7,
  PM_STATUS_RESOURCE_CAP = 8,
  PM_STATUS_IO = 9,
  PM_STATUS_PANIC = 10,
} PmStatus;

// A fitted sum of complex exponentials.
typedef struct PmExpSum PmExpSum;

// A GKLS model together with its initial state.
typedef struct PmModel PmModel;

typedef struct PmComplex {
  double re;
  double im;
} PmComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a model from a JSON object with the same schema as a run config's `model` key.
// Relative paths inside it resolve against the working directory.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum PmStatus pm_model_from_json(const char *json, struct PmModel **out);

// # Safety
// `model` must come from [`pm_model_from_json`] and not be used afterwards. Null is a no-op.
void pm_model_free(struct PmModel *model);

// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum PmStatus pm_model_system_dim(const struct PmModel *model, size_t *out);

// Nested multi-time value for `n` insertion times. `left` and `right` hold `n`
// consecutive d×d matrices; a null `right` means identities.
//
// # Safety
// Array arguments must hold the stated number of elements.
enum PmStatus pm_multitime(const struct PmModel *model,
                           size_t n,
                           const double *times,
                           const struct PmComplex *left,
                           const struct PmComplex *right,
                           struct PmComplex *out);

// `⟨X(t+τ) Y(t)⟩` for d×d operators `x`, `y`.
//
// # Safety
// `x` and `y` must hold d² elements.
enum PmStatus pm_two_time_correlator(const struct PmModel *model,
                                     const struct PmComplex *x,
                                     const struct PmComplex *y,
                                     double t,
                                     double tau,
                                     struct PmComplex *out);

// Free pseudomode correlation `C^L_{j j′}(t+s, s)`.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum PmStatus pm_free_bath_two_time(const struct PmModel *model,
                                    size_t j,
                                    size_t jp,
                                    double t,
                                    double s,
                                    struct PmComplex *out);

// Matrix-pencil fit of `order` exponentials to `n` uniformly spaced samples.
// `max_residual` may be null.
//
// # Safety
// `grid` and `values` must hold `n` elements; `out` must be a valid pointer.
enum PmStatus pm_fit_exponentials(const double *grid,
                                  const struct PmComplex *values,
                                  size_t n,
                                  size_t order,
                                  struct PmExpSum **out,
                                  double *max_residual);

// # Safety
// `es` must be a live handle and `out` a valid pointer.
enum PmStatus pm_expsum_len(const struct PmExpSum *es, size_t *out);

// Term `k` as `amplitude · e^{exponent·t}`.
//
// # Safety
// `es` must be a live handle; outputs must be valid pointers.
enum PmStatus pm_expsum_term(const struct PmExpSum *es,
                             size_t k,
                             struct PmComplex *amplitude,
                             struct PmComplex *exponent);

// # Safety
// `es` must come from [`pm_fit_exponentials`] and not be used afterwards. Null is a no-op.
void pm_expsum_free(struct PmExpSum *es);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *pm_last_error_message(void);

const char *pm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSEUDOMODE_H */
