#ifndef CASCADE_OPO_H
#define CASCADE_OPO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OpoStatus {
  OPO_STATUS_OK = 0,
  OPO_STATUS_ERROR = 1,
  OPO_STATUS_CONFIG = 2,
  OPO_STATUS_TRUNCATION_OVERFLOW = 3,
  OPO_STATUS_ORACLE_BUDGET = 4,
  OPO_STATUS_NUMERICAL_COLLAPSE = 5,
  OPO_STATUS_NULL_POINTER = 6,
  OPO_STATUS_INVALID_ARGUMENT = 7,
  OPO_STATUS_PANIC = 8,
} OpoStatus;

typedef enum OpoSeries {
  OPO_SERIES_TIMES = 0,
  OPO_SERIES_N1 = 1,
  OPO_SERIES_SE_N1 = 2,
  OPO_SERIES_N2 = 3,
  OPO_SERIES_SE_N2 = 4,
  // Undefined entries are NaN.
  OPO_SERIES_G3 = 5,
  OPO_SERIES_SE_G3 = 6,
} OpoSeries;

typedef enum OpoCommand {
  OPO_COMMAND_SIMULATE = 0,
  OPO_COMMAND_ORACLE = 1,
  OPO_COMMAND_SEMICLASSICAL = 2,
  OPO_COMMAND_THRESHOLD = 3,
  OPO_COMMAND_WIGNER = 4,
  OPO_COMMAND_TRIPLET = 5,
  OPO_COMMAND_COUPLING = 6,
} OpoCommand;

// Parsed run configuration.
typedef struct OpoConfig OpoConfig;

// Time series of one run.
typedef struct OpoRunResult OpoRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *opo_version(void);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *opo_last_error(void);

// Parses configuration text. On success `*out` receives a new handle.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum OpoStatus opo_config_parse(const char *toml, struct OpoConfig **out);

// Reads and parses a configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OpoStatus opo_config_load(const char *path, struct OpoConfig **out);

// # Safety
// `config` must be a handle from this library or NULL.
enum OpoStatus opo_config_set_seed(struct OpoConfig *config, uint64_t seed);

// # Safety
// `config` must be a handle from this library or NULL.
enum OpoStatus opo_config_set_workers(struct OpoConfig *config, size_t workers);

// # Safety
// `config` must be a handle from this library or NULL; it is invalid afterwards.
void opo_config_free(struct OpoConfig *config);

// Runs the configured engine in memory (no files) and returns the time series.
//
// # Safety
// `config` must be a valid handle and `out` a valid pointer.
enum OpoStatus opo_run(const struct OpoConfig *config, struct OpoRunResult **out);

// Number of samples in `result` (0 for NULL).
//
// # Safety
// `result` must be a handle from this library or NULL.
size_t opo_result_len(const struct OpoRunResult *result);

// Copies one column into `buffer`, which must hold `len` doubles with
// `len >= opo_result_len(result)`.
//
// # Safety
// `result` must be a valid handle and `buffer` valid for `len` writes.
enum OpoStatus opo_result_copy(const struct OpoRunResult *result,
                               enum OpoSeries series,
                               double *buffer,
                               size_t len);

// # Safety
// `result` must be a handle from this library or NULL; it is invalid afterwards.
void opo_result_free(struct OpoRunResult *result);

// Runs a CLI command, writing its outputs to `out_dir`. `config_path` may be
// NULL for the triplet command.
//
// # Safety
// Both strings must be NUL-terminated (or `config_path` NULL).
enum OpoStatus opo_execute(enum OpoCommand command, const char *config_path, const char *out_dir);

// Threshold drive rate for the configuration's pump.
//
// # Safety
// `config` must be a valid handle and `out` a valid pointer.
enum OpoStatus opo_config_threshold(const struct OpoConfig *config, double *out);

// Threshold drive of a Gaussian pulse train with equal decay rates `gamma`.
//
// # Safety
// `out` must be a valid pointer.
enum OpoStatus opo_pulsed_threshold(double gamma, double duration, double tau, double *out);

// Normalized third-order correlation of a photon-number distribution.
// Fails with `OPO_STATUS_INVALID_ARGUMENT` when the mean is below the
// reporting guard.
//
// # Safety
// `p` must be valid for `len` reads and `out` a valid pointer.
enum OpoStatus opo_g3(const double *p, size_t len, double *out);

// Wigner function at `alpha = re + i im` for a `dim x dim` density matrix
// given row-major as interleaved `(re, im)` pairs.
//
// # Safety
// `rho` must be valid for `2 * dim * dim` reads and `out` a valid pointer.
enum OpoStatus opo_wigner_at(const double *rho, size_t dim, double re, double im, double *out);

// Reduced purity of the normalized perturbative polarization triplet.
//
// # Safety
// `out` must be a valid pointer.
enum OpoStatus opo_triplet_purity(double chi, double k, double e0, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASCADE_OPO_H */
