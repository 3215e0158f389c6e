#ifndef GSM_HBT_H
#define GSM_HBT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum GsmStatus {
  GSM_STATUS_OK = 0,
  GSM_STATUS_INVALID_ARGUMENT = 1,
  GSM_STATUS_NULL_POINTER = 2,
  GSM_STATUS_ORDER_OVERFLOW = 3,
  GSM_STATUS_NUMERICAL = 4,
  GSM_STATUS_ZERO_POWER = 5,
  GSM_STATUS_NON_CONVERGENCE = 6,
  GSM_STATUS_BUFFER_TOO_SMALL = 7,
  GSM_STATUS_IO = 8,
  GSM_STATUS_PANIC = 9,
} GsmStatus;

// Opaque Monte Carlo field ensemble.
typedef struct GsmEnsemble GsmEnsemble;

// Opaque Gaussian Schell-model source.
typedef struct GsmModel GsmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gsm_version(void);

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the buffer size needed for the full
// message, or 0 when there is no error.
size_t gsm_last_error_message(char *buf, size_t len);

enum GsmStatus gsm_model_new(double sigma_i,
                             double sigma_mu,
                             double wavelength,
                             struct GsmModel **out);

// Model with `sigma_mu = beta * sigma_i`.
enum GsmStatus gsm_model_from_beta(double sigma_i,
                                   double beta,
                                   double wavelength,
                                   struct GsmModel **out);

// Releases a model. Null is ignored.
void gsm_model_free(struct GsmModel *model);

enum GsmStatus gsm_model_kernel_params(const struct GsmModel *model,
                                       double *a,
                                       double *b,
                                       double *c);

// 1D eigenvalue `λ_n`.
enum GsmStatus gsm_model_eigenvalue(const struct GsmModel *model, size_t n, double *out);

// `λ_n / λ_0` from the coherence ratio alone.
enum GsmStatus gsm_eigenvalue_ratio(double beta, size_t n, double *out);

// Normalized Hermite-Gaussian mode `φ_n(x)` with waist parameter `c`.
enum GsmStatus gsm_hg_mode(double c, size_t n, double x, double *out);

// First-order coherence `G¹(x1, x2)`.
enum GsmStatus gsm_g1_kernel(const struct GsmModel *model, double x1, double x2, double *out);

enum GsmStatus gsm_matched_focal_length(const struct GsmModel *model,
                                        double fiber_waist,
                                        double *out);

// Analytic `g²` of an ideal projector onto `(m, n)` against a fiber
// displaced by each of `displacements` along x. `c_det <= 0` selects the
// mode-matched fiber.
enum GsmStatus gsm_g2_scan(const struct GsmModel *model,
                           size_t m,
                           size_t n,
                           const double *displacements,
                           size_t len,
                           double c_det,
                           double *out);

// Participation ratio `(Σλ)² / Σλ²`.
enum GsmStatus gsm_schmidt_number(const double *values, size_t len, double *out);

// Fidelity between two non-negative spectra listed in the same index order.
enum GsmStatus gsm_fidelity(const double *experiment,
                            const double *theory,
                            size_t len,
                            double *out);

// Thermal ensemble of `realizations` fields; `dims` is 1 or 2.
enum GsmStatus gsm_ensemble_new(const struct GsmModel *model,
                                size_t realizations,
                                uint64_t seed,
                                uint32_t dims,
                                struct GsmEnsemble **out);

// Releases an ensemble. Null is ignored.
void gsm_ensemble_free(struct GsmEnsemble *ensemble);

// Number of complex samples in one field realization.
enum GsmStatus gsm_ensemble_field_len(const struct GsmEnsemble *ensemble, size_t *out);

// Writes realization `index` as separate real and imaginary arrays of
// length `len`, which must be at least `gsm_ensemble_field_len`.
enum GsmStatus gsm_ensemble_sample_field(const struct GsmEnsemble *ensemble,
                                         size_t index,
                                         double *re,
                                         double *im,
                                         size_t len);

// Monte Carlo `g²` between ideal projectors onto `(m1, n1)` and `(m2, n2)`.
enum GsmStatus gsm_ensemble_g2_ideal(const struct GsmEnsemble *ensemble,
                                     size_t m1,
                                     size_t n1,
                                     size_t m2,
                                     size_t n2,
                                     double *value,
                                     double *stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GSM_HBT_H */
