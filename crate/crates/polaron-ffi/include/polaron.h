#ifndef POLARON_H
#define POLARON_H

/* Auto-generated by cbindgen from the polaron-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible FFI call.
 */
typedef enum PolaronStatus {
  /**
   * Operation completed.
   */
  POLARON_OK = 0,
  /**
   * A required pointer argument was null.
   */
  POLARON_ERR_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  POLARON_ERR_INVALID_UTF8 = 2,
  /**
   * Configuration rejected (unknown key, bad value, or failed validation).
   */
  POLARON_ERR_CONFIG = 3,
  /**
   * The computation itself failed (solver or model error).
   */
  POLARON_ERR_COMPUTE = 4,
  /**
   * File input/output failed.
   */
  POLARON_ERR_IO = 5,
  /**
   * An index argument was out of range.
   */
  POLARON_ERR_INDEX = 6,
  /**
   * The requested quantity was not reached during the run.
   */
  POLARON_ERR_NOT_REACHED = 7,
  /**
   * Internal panic; the handle remains valid but the call had no effect.
   */
  POLARON_ERR_INTERNAL = 8,
} PolaronStatus;

/**
 * Opaque run-configuration handle.
 */
typedef struct PolaronConfig PolaronConfig;

/**
 * Opaque ground-state-summary handle.
 */
typedef struct PolaronGround PolaronGround;

/**
 * Opaque quench-outcome handle.
 */
typedef struct PolaronQuench PolaronQuench;

/**
 * One recorded observable row of a quench run.
 */
typedef struct PolaronRecord {
  double time_ns;
  double time_tau;
  double n_ph;
  double survival;
  double s_x;
  double s_p;
  double entropy;
  double norm;
} PolaronRecord;

/**
 * Per-momentum-sector ground-state data.
 */
typedef struct PolaronSectorGround {
  size_t k_index;
  double k_value;
  double energy;
  double n_ph;
  double residue;
} PolaronSectorGround;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Pointer to a NUL-terminated description of the most recent error on the
 * calling thread. Owned by the library; valid until the next failing call on
 * the same thread. Never null.
 */
const char *polaron_last_error_message(void);

/**
 * Creates a configuration populated with the default production preset.
 * Free with [`polaron_config_free`]. Returns null only on internal failure.
 */
struct PolaronConfig *polaron_config_new(void);

/**
 * Loads a configuration from a flat `key = value` file, writing the new
 * handle through `out` on success.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PolaronStatus polaron_config_from_file(const char *path, struct PolaronConfig **out);

/**
 * Overrides one configuration field by key name (same keys as the config
 * file, e.g. `"max_phonons"`, `"phi_dc_over_pi"`).
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` valid NUL-terminated strings.
 */
enum PolaronStatus polaron_config_set(struct PolaronConfig *cfg,
                                      const char *key,
                                      const char *value);

/**
 * Validates the configuration without running anything.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum PolaronStatus polaron_config_validate(const struct PolaronConfig *cfg);

/**
 * Releases a configuration handle. Null is ignored.
 *
 * # Safety
 * `cfg` must be a handle returned by this library, freed at most once.
 */
void polaron_config_free(struct PolaronConfig *cfg);

/**
 * Runs the interaction quench described by `cfg`, writing a new outcome
 * handle through `out` on success.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum PolaronStatus polaron_quench_run(const struct PolaronConfig *cfg, struct PolaronQuench **out);

/**
 * Number of recorded observable rows in a quench outcome.
 *
 * # Safety
 * `quench` must be a live handle.
 */
size_t polaron_quench_num_records(const struct PolaronQuench *quench);

/**
 * Copies recorded row `index` into `record`.
 *
 * # Safety
 * `quench` must be a live handle and `record` a valid pointer.
 */
enum PolaronStatus polaron_quench_record(const struct PolaronQuench *quench,
                                         size_t index,
                                         struct PolaronRecord *record);

/**
 * Writes the formation time in units of the hopping time through `out`.
 * Returns `PolaronErrNotReached` when dressing never reached the reference
 * phonon number during the run.
 *
 * # Safety
 * `quench` must be a live handle and `out` a valid pointer.
 */
enum PolaronStatus polaron_quench_formation_time(const struct PolaronQuench *quench, double *out);

/**
 * Ground-state weight of the initial bare state (quasiparticle residue of
 * the reference ground state). NaN for a null handle.
 *
 * # Safety
 * `quench` must be a live handle.
 */
double polaron_quench_ground_weight(const struct PolaronQuench *quench);

/**
 * Reference ground-state phonon number behind the formation-time detector.
 * NaN for a null handle.
 *
 * # Safety
 * `quench` must be a live handle.
 */
double polaron_quench_reference_phonon_number(const struct PolaronQuench *quench);

/**
 * Largest deviation of the state norm from one across all steps. NaN for a
 * null handle.
 *
 * # Safety
 * `quench` must be a live handle.
 */
double polaron_quench_max_norm_drift(const struct PolaronQuench *quench);

/**
 * Writes the quench time series as CSV (with JSON metadata header) to `path`.
 *
 * # Safety
 * `cfg` and `quench` must be live handles; `path` a valid string.
 */
enum PolaronStatus polaron_quench_write_csv(const struct PolaronConfig *cfg,
                                            const struct PolaronQuench *quench,
                                            const char *path);

/**
 * Releases a quench-outcome handle. Null is ignored.
 *
 * # Safety
 * `quench` must be a handle returned by this library, freed at most once.
 */
void polaron_quench_free(struct PolaronQuench *quench);

/**
 * Solves the per-sector ground states described by `cfg`, writing a new
 * summary handle through `out` on success.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum PolaronStatus polaron_ground_run(const struct PolaronConfig *cfg, struct PolaronGround **out);

/**
 * Number of momentum sectors in a ground-state summary.
 *
 * # Safety
 * `ground` must be a live handle.
 */
size_t polaron_ground_num_sectors(const struct PolaronGround *ground);

/**
 * Copies sector `index` of the summary into `sector`.
 *
 * # Safety
 * `ground` must be a live handle and `sector` a valid pointer.
 */
enum PolaronStatus polaron_ground_sector(const struct PolaronGround *ground,
                                         size_t index,
                                         struct PolaronSectorGround *sector);

/**
 * Momentum index of the global ground state. `usize::MAX` for a null handle.
 *
 * # Safety
 * `ground` must be a live handle.
 */
size_t polaron_ground_k_gs_index(const struct PolaronGround *ground);

/**
 * Global ground-state energy in rad/ns. NaN for a null handle.
 *
 * # Safety
 * `ground` must be a live handle.
 */
double polaron_ground_energy(const struct PolaronGround *ground);

/**
 * Global ground-state phonon number. NaN for a null handle.
 *
 * # Safety
 * `ground` must be a live handle.
 */
double polaron_ground_phonon_number(const struct PolaronGround *ground);

/**
 * Global ground-state quasiparticle residue. NaN for a null handle.
 *
 * # Safety
 * `ground` must be a live handle.
 */
double polaron_ground_residue(const struct PolaronGround *ground);

/**
 * Writes the ground-state summary as pretty-printed JSON to `path`.
 *
 * # Safety
 * `cfg` and `ground` must be live handles; `path` a valid string.
 */
enum PolaronStatus polaron_ground_write_json(const struct PolaronConfig *cfg,
                                             const struct PolaronGround *ground,
                                             const char *path);

/**
 * Releases a ground-state-summary handle. Null is ignored.
 *
 * # Safety
 * `ground` must be a handle returned by this library, freed at most once.
 */
void polaron_ground_free(struct PolaronGround *ground);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLARON_H */
