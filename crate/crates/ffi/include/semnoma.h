#ifndef SEMNOMA_H
#define SEMNOMA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SnRole {
  SN_ROLE_NEAR = 0,
  SN_ROLE_FAR = 1,
} SnRole;

typedef enum SnStatus {
  SN_STATUS_OK = 0,
  SN_STATUS_NULL_POINTER = 1,
  SN_STATUS_INVALID_ARGUMENT = 2,
  SN_STATUS_OUT_OF_RANGE = 3,
  SN_STATUS_BUFFER_TOO_SMALL = 4,
  SN_STATUS_IO = 5,
  SN_STATUS_MODEL_FORMAT = 6,
  SN_STATUS_INFEASIBLE = 7,
  SN_STATUS_INTERNAL = 99,
} SnStatus;

typedef struct SnAccuracyModel SnAccuracyModel;

typedef struct SnModemPair SnModemPair;

typedef struct SnQuantizer SnQuantizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sn_last_error_message(char *buf, size_t len);

// Fits an `m`-bit quantizer for features in `[-s + d, s + d]`.
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum SnStatus sn_quantizer_new(uint32_t m, double s, double d, struct SnQuantizer **out);

// # Safety
// `q` must be null or a handle from [`sn_quantizer_new`] not yet freed.
void sn_quantizer_free(struct SnQuantizer *q);

// Number of levels, or 0 for a null handle.
//
// # Safety
// `q` must be null or a live quantizer handle.
size_t sn_quantizer_levels(const struct SnQuantizer *q);

// Constellation spacing `1 / f_s`, or NaN for a null handle.
//
// # Safety
// `q` must be null or a live quantizer handle.
double sn_quantizer_step(const struct SnQuantizer *q);

// Writes the constellation (ascending) into `out`, which must hold at
// least `sn_quantizer_levels(q)` values.
//
// # Safety
// `q` must be a live handle and `out` must point to `cap` writable doubles.
enum SnStatus sn_quantizer_constellation(const struct SnQuantizer *q, double *out, size_t cap);

// # Safety
// `values` must point to `n` doubles and `indices` to `n` writable u32.
enum SnStatus sn_quantizer_quantize(const struct SnQuantizer *q,
                                    const double *values,
                                    size_t n,
                                    uint32_t *indices);

// # Safety
// `indices` must point to `n` u32 and `values` to `n` writable doubles.
enum SnStatus sn_quantizer_dequantize(const struct SnQuantizer *q,
                                      const uint32_t *indices,
                                      size_t n,
                                      double *values);

// Loads a trained near/far model pair from the JSON files written by
// `semnoma train-modem`.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum SnStatus sn_modem_load(const char *near_path, const char *far_path, struct SnModemPair **out);

// # Safety
// `p` must be null or a handle from [`sn_modem_load`] not yet freed.
void sn_modem_free(struct SnModemPair *p);

// Modulates dequantized features of both users and superposes them with
// amplitudes `sqrt(rho)`. The composite is written as separate real and
// imaginary arrays of length `n`.
//
// # Safety
// Inputs must point to `n` doubles each and outputs to `n` writable doubles.
enum SnStatus sn_modem_transmit(const struct SnModemPair *p,
                                const double *v_near,
                                const double *v_far,
                                size_t n,
                                double rho_near,
                                double rho_far,
                                double *out_re,
                                double *out_im);

// Runs one user's demodulator on equalized symbols. The near role fills
// both `out_near` and `out_far`; the far role fills only `out_far` and
// `out_near` may be null.
//
// # Safety
// `re`/`im` must point to `n` doubles; non-null outputs to `n` writable doubles.
enum SnStatus sn_modem_demodulate(const struct SnModemPair *p,
                                  enum SnRole role,
                                  const double *re,
                                  const double *im,
                                  size_t n,
                                  double *out_near,
                                  double *out_far);

// Multiply-accumulates per symbol for one user's modulator plus
// demodulator, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live pair handle.
size_t sn_modem_macs(const struct SnModemPair *p, enum SnRole role);

// Hard-decision SIC on unit-power Gray QAM with `bits_near`/`bits_far`
// bits per symbol. Detected indices go to `out_near` and `out_far`.
//
// # Safety
// `re`/`im` must point to `n` doubles and outputs to `n` writable u32.
enum SnStatus sn_sic_detect(const double *re,
                            const double *im,
                            size_t n,
                            uint32_t bits_near,
                            uint32_t bits_far,
                            double rho_near,
                            double rho_far,
                            uint32_t *out_near,
                            uint32_t *out_far);

// Generalized logistic accuracy curve over linear SNR, with asymptotes
// `a1 < a2` and exponent `-(c1 * gamma + c2)`.
//
// # Safety
// `out` must be writable.
enum SnStatus sn_accuracy_new(double a1,
                              double a2,
                              double c1,
                              double c2,
                              struct SnAccuracyModel **out);

// # Safety
// `m` must be null or a handle from [`sn_accuracy_new`] not yet freed.
void sn_accuracy_free(struct SnAccuracyModel *m);

// Accuracy at linear SNR `gamma`, or NaN for a null handle.
//
// # Safety
// `m` must be null or a live handle.
double sn_accuracy_eval(const struct SnAccuracyModel *m, double gamma);

// Linear SNR at which the curve reaches `target`.
//
// # Safety
// `m` must be a live handle and `out` writable.
enum SnStatus sn_accuracy_inverse(const struct SnAccuracyModel *m, double target, double *out);

// Closed-form post-SIC SINR of both users (linear) for power split
// `rho` and linear channel gains.
//
// # Safety
// Outputs must be writable.
enum SnStatus sn_effective_snr(double rho_near,
                               double rho_far,
                               double gain_near,
                               double gain_far,
                               double *out_near,
                               double *out_far);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMNOMA_H */
