#ifndef OTFS_FFI_H
#define OTFS_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OtfsStatus {
  OTFS_STATUS_OK = 0,
  OTFS_STATUS_NULL_POINTER = 1,
  OTFS_STATUS_INVALID_ARGUMENT = 2,
  OTFS_STATUS_DIMENSION = 3,
  OTFS_STATUS_UNSUPPORTED_DIMENSION = 4,
  OTFS_STATUS_CAPACITY = 5,
  OTFS_STATUS_NUMERICAL = 6,
  OTFS_STATUS_BUFFER_TOO_SMALL = 7,
  OTFS_STATUS_INTERNAL = 8,
} OtfsStatus;

// Concrete precoder for [`otfs_precoder_new`].
typedef enum OtfsPrecoderKind {
  OTFS_PRECODER_KIND_PROPOSED_FREQ_SEL = 0,
  OTFS_PRECODER_KIND_PROPOSED_TIME_SEL = 1,
  OTFS_PRECODER_KIND_IDENTITY = 2,
  OTFS_PRECODER_KIND_PHASE_ROTATION = 3,
} OtfsPrecoderKind;

typedef enum OtfsChannelKind {
  // `param` is the number of taps L.
  OTFS_CHANNEL_KIND_FIR = 0,
  // `param` is the maximum Doppler in Hz.
  OTFS_CHANNEL_KIND_BEM_DOPPLER = 1,
  // `param` is the BEM order Q.
  OTFS_CHANNEL_KIND_BEM_ORDER = 2,
} OtfsChannelKind;

// Precoder selection for simulations and certificates; `Proposed` follows the channel family.
typedef enum OtfsPrecoderChoice {
  OTFS_PRECODER_CHOICE_PROPOSED = 0,
  OTFS_PRECODER_CHOICE_IDENTITY = 1,
  OTFS_PRECODER_CHOICE_PHASE_ROTATION = 2,
} OtfsPrecoderChoice;

typedef enum OtfsAlphabet {
  OTFS_ALPHABET_BPSK = 0,
  OTFS_ALPHABET_QPSK = 1,
} OtfsAlphabet;

typedef enum OtfsDetector {
  OTFS_DETECTOR_ML = 0,
  OTFS_DETECTOR_LMMSE = 1,
} OtfsDetector;

// Opaque precoder handle.
typedef struct OtfsPrecoder OtfsPrecoder;

typedef struct OtfsDiversityConfig {
  size_t m;
  size_t n;
  // `Fir` or `BemOrder`.
  enum OtfsChannelKind channel;
  double channel_param;
  enum OtfsPrecoderChoice precoder;
  // Phase step of the rotation baseline; NaN selects `pi / (2 MN)`.
  double theta_step;
  enum OtfsAlphabet alphabet;
  uint64_t pair_budget;
  double rank_tol;
  uint64_t seed;
} OtfsDiversityConfig;

typedef struct OtfsDiversityResult {
  size_t g_d;
  size_t max_diversity;
  bool full_diversity;
  double g_c;
  // NaN unless full diversity was certified.
  double g_c_normalized;
  double min_theta_projection;
  uint64_t pairs_examined;
  bool exhaustive;
  size_t worst_pair_count;
} OtfsDiversityResult;

typedef struct OtfsBerConfig {
  size_t m;
  size_t n;
  enum OtfsChannelKind channel;
  double channel_param;
  enum OtfsPrecoderChoice precoder;
  // NaN selects `pi / (2 MN)`.
  double theta_step;
  enum OtfsAlphabet alphabet;
  enum OtfsDetector detector;
  uint64_t max_frames;
  uint64_t target_bit_errors;
  uint64_t seed;
  double delta_f;
  double carrier;
  // Negative selects the default (L-1 for FIR, 0 for BEM).
  int64_t cp_len;
} OtfsBerConfig;

typedef struct OtfsBerRecord {
  double snr_db;
  uint64_t frames;
  uint64_t bits;
  uint64_t bit_errors;
  double ber;
} OtfsBerRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *otfs_last_error(void);

void otfs_clear_error(void);

// Builds a precoder for an `m x n` grid and stores the handle in `*out`.
//
// # Safety
// `out` must be valid for one pointer write.
enum OtfsStatus otfs_precoder_new(enum OtfsPrecoderKind kind,
                                  size_t m,
                                  size_t n,
                                  double theta_step,
                                  struct OtfsPrecoder **out);

// Releases a handle; NULL is ignored.
//
// # Safety
// `p` must come from [`otfs_precoder_new`] and not be used afterwards.
void otfs_precoder_free(struct OtfsPrecoder *p);

// `MN`, or 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t otfs_precoder_size(const struct OtfsPrecoder *p);

// `output = V input` for `len = MN` complex samples.
//
// # Safety
// `input` and `output` must each hold `2 * len` doubles; they may alias.
enum OtfsStatus otfs_precoder_apply(const struct OtfsPrecoder *p,
                                    const double *input,
                                    double *output,
                                    size_t len);

// Writes `V` column-major as `MN * MN` interleaved complex entries.
//
// # Safety
// `out` must hold `2 * len` doubles.
enum OtfsStatus otfs_precoder_matrix(const struct OtfsPrecoder *p, double *out, size_t len);

// Diversity and coding-gain certificate.
//
// # Safety
// `cfg` must point to a valid config and `out` be valid for one write.
enum OtfsStatus otfs_diversity(const struct OtfsDiversityConfig *cfg,
                               struct OtfsDiversityResult *out);

// Simulates `n_snr` SNR points and writes one record per point.
//
// # Safety
// `cfg` must be valid, `snr_db` must hold `n_snr` doubles and `out` must
// hold `out_len` records.
enum OtfsStatus otfs_ber_run(const struct OtfsBerConfig *cfg,
                             const double *snr_db,
                             size_t n_snr,
                             struct OtfsBerRecord *out,
                             size_t out_len);

// Default phase step `pi / (2 MN)` of the rotation baseline.
double otfs_default_phase_step(size_t m, size_t n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFS_FFI_H */
