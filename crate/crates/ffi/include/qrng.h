#ifndef QRNG_H
#define QRNG_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QrngStatus {
  QRNG_STATUS_OK = 0,
  QRNG_STATUS_NULL_POINTER = 1,
  QRNG_STATUS_VALIDATION = 2,
  QRNG_STATUS_TOO_SHORT = 3,
  QRNG_STATUS_NOT_CONVERGED = 4,
  QRNG_STATUS_FIT_FAILED = 5,
  QRNG_STATUS_NO_COINCIDENCES = 6,
  QRNG_STATUS_IO = 7,
  QRNG_STATUS_JSON = 8,
  QRNG_STATUS_INVALID_UTF8 = 9,
  QRNG_STATUS_BUFFER_TOO_SMALL = 10,
  QRNG_STATUS_PANIC = 11,
} QrngStatus;

/**
 * Packed bit stream with provenance.
 */
typedef struct QrngBits QrngBits;

/**
 * Pipeline configuration.
 */
typedef struct QrngConfig QrngConfig;

/**
 * Statistical suite results.
 */
typedef struct QrngSuiteReport QrngSuiteReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf`.
 */
enum QrngStatus qrng_last_error_message(char *buf, size_t cap, size_t *written);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qrng_version(void);

enum QrngStatus qrng_config_default(struct QrngConfig **out);

/**
 * `name` is one of `dataset_A`, `dataset_B`, `classical_source`.
 */
enum QrngStatus qrng_config_preset(const char *name, struct QrngConfig **out);

enum QrngStatus qrng_config_from_json(const char *json, struct QrngConfig **out);

enum QrngStatus qrng_config_to_json(const struct QrngConfig *cfg,
                                    char *buf,
                                    size_t cap,
                                    size_t *written);

enum QrngStatus qrng_config_set_seed(struct QrngConfig *cfg, uint64_t seed);

void qrng_config_free(struct QrngConfig *cfg);

/**
 * Fit the simulated HOM dip of `cfg`.
 */
enum QrngStatus qrng_simulate_hom(const struct QrngConfig *cfg, double *visibility, double *stderr);

/**
 * Generate `n_bits` raw heralded bits.
 */
enum QrngStatus qrng_generate(const struct QrngConfig *cfg, size_t n_bits, struct QrngBits **out);

/**
 * Wrap `ceil(n_bits/8)` little-endian packed bytes as a raw stream.
 */
enum QrngStatus qrng_bits_from_bytes(const uint8_t *bytes, size_t n_bits, struct QrngBits **out);

enum QrngStatus qrng_bits_len(const struct QrngBits *bits, size_t *len);

/**
 * Copy the packed bytes into `buf`, which must hold `ceil(len/8)` bytes.
 */
enum QrngStatus qrng_bits_copy_bytes(const struct QrngBits *bits, uint8_t *buf, size_t cap);

enum QrngStatus qrng_bits_min_entropy(const struct QrngBits *bits, double *h_inf);

void qrng_bits_free(struct QrngBits *bits);

/**
 * Toeplitz-extract a raw stream with the extractor of `cfg`.
 */
enum QrngStatus qrng_extract(const struct QrngConfig *cfg,
                             const struct QrngBits *raw,
                             struct QrngBits **out);

/**
 * Certification report of `cfg` as JSON; `raw` may be NULL.
 */
enum QrngStatus qrng_certify_json(const struct QrngConfig *cfg,
                                  const struct QrngBits *raw,
                                  char *buf,
                                  size_t cap,
                                  size_t *written);

/**
 * Horodecki CHSH bound of the density matrix given as row-major real and
 * imaginary parts (16 values each).
 */
enum QrngStatus qrng_chsh_from_rho(const double *re, const double *im, double *s);

enum QrngStatus qrng_suite_run(const struct QrngBits *bits,
                               double threshold,
                               struct QrngSuiteReport **out);

enum QrngStatus qrng_suite_all_passed(const struct QrngSuiteReport *report, bool *passed);

/**
 * The value compared with the threshold for test `name`. Fails with
 * `QRNG_STATUS_VALIDATION` when the test was not applicable.
 */
enum QrngStatus qrng_suite_p_value(const struct QrngSuiteReport *report,
                                   const char *name,
                                   double *p,
                                   bool *passed);

enum QrngStatus qrng_suite_to_json(const struct QrngSuiteReport *report,
                                   char *buf,
                                   size_t cap,
                                   size_t *written);

void qrng_suite_free(struct QrngSuiteReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QRNG_H */
