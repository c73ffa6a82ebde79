#ifndef ICDSIM_H
#define ICDSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  ICDSIM_OUTCOME_NO_THERAPY_NEEDED = 0,
  ICDSIM_OUTCOME_INHIBITED = 1,
  ICDSIM_OUTCOME_TERMINATED_AFTER_K_THERAPIES = 2,
  ICDSIM_OUTCOME_THERAPY_EXHAUSTED = 3,
} IcdsimOutcome;

typedef enum {
  ICDSIM_STATUS_OK = 0,
  ICDSIM_STATUS_NULL_POINTER = 1,
  ICDSIM_STATUS_INVALID_UTF8 = 2,
  ICDSIM_STATUS_CONFIG = 3,
  ICDSIM_STATUS_SIMULATION = 4,
  ICDSIM_STATUS_IO = 5,
  ICDSIM_STATUS_PANIC = 6,
} IcdsimStatus;

typedef enum {
  ICDSIM_THERAPY_KIND_NONE = 0,
  ICDSIM_THERAPY_KIND_ATP = 1,
  ICDSIM_THERAPY_KIND_SHOCK = 2,
} IcdsimTherapyKind;

typedef enum {
  ICDSIM_ZONE_VT1 = 0,
  ICDSIM_ZONE_VT = 1,
  ICDSIM_ZONE_VF1 = 2,
  ICDSIM_ZONE_VF = 3,
} IcdsimZone;

/**
 * Opaque streaming device handle.
 */
typedef struct IcdsimDevice IcdsimDevice;

/**
 * Opaque episode report handle.
 */
typedef struct IcdsimReport IcdsimReport;

/**
 * Opaque scenario handle.
 */
typedef struct IcdsimScenario IcdsimScenario;

/**
 * A therapy prescribed by a streaming device. `kind` is `None` when the
 * sample produced no prescription.
 */
typedef struct {
  IcdsimTherapyKind kind;
  IcdsimZone zone;
  uint32_t n_pulses;
  double onset_ms;
  double end_ms;
} IcdsimTherapy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *icdsim_version(void);

/**
 * Message of the last failed call on this thread, or NULL if none.
 * Release with `icdsim_string_free`.
 */
char *icdsim_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void icdsim_string_free(char *s);

/**
 * Parses and validates a scenario JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
IcdsimStatus icdsim_scenario_from_json(const char *json, IcdsimScenario **out);

/**
 * # Safety
 * `scenario` must come from `icdsim_scenario_from_json` or be NULL.
 */
void icdsim_scenario_free(IcdsimScenario *scenario);

/**
 * Runs a closed-loop episode. Blocks until the episode ends.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
IcdsimStatus icdsim_run_closed_loop(const IcdsimScenario *scenario, IcdsimReport **out);

/**
 * Replays an EGM CSV file through the device without feedback.
 * `icd_json` and `template_json` may be NULL for defaults / no template.
 *
 * # Safety
 * String arguments must be NUL-terminated or NULL where allowed; `out`
 * must be writable.
 */
IcdsimStatus icdsim_replay_csv(const char *egm_path,
                               const char *icd_json,
                               const char *template_json,
                               IcdsimReport **out);

/**
 * # Safety
 * `report` must be a live handle.
 */
IcdsimStatus icdsim_report_outcome(const IcdsimReport *report, IcdsimOutcome *out);

/**
 * Number of delivered therapies (inhibits excluded), or 0 for NULL.
 *
 * # Safety
 * `report` must be a live handle or NULL.
 */
uint32_t icdsim_report_therapies(const IcdsimReport *report);

/**
 * Serializes the full report as JSON.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
IcdsimStatus icdsim_report_to_json(const IcdsimReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library or be NULL.
 */
void icdsim_report_free(IcdsimReport *report);

/**
 * Creates a streaming device. `icd_json` (device programming) and
 * `template_json` (NSR template) may be NULL.
 *
 * # Safety
 * String arguments must be NUL-terminated or NULL; `out` must be writable.
 */
IcdsimStatus icdsim_device_new(const char *icd_json, const char *template_json, IcdsimDevice **out);

/**
 * Feeds one EGM sample (1 ms cadence). `therapy` receives the
 * prescription, with `kind = None` if there is none.
 *
 * # Safety
 * `device` must be a live handle; `therapy` must be writable.
 */
IcdsimStatus icdsim_device_push_sample(IcdsimDevice *device,
                                       double t_ms,
                                       double nf_mv,
                                       double ff_mv,
                                       IcdsimTherapy *therapy);

/**
 * Copies the pulse onsets of the last ATP prescription into `buf`
 * (capacity `cap`) and stores the full count in `len`.
 *
 * # Safety
 * `device` must be a live handle; `buf` must hold `cap` doubles (may be
 * NULL if `cap` is 0); `len` must be writable.
 */
IcdsimStatus icdsim_device_last_pulses(const IcdsimDevice *device,
                                       double *buf,
                                       uintptr_t cap,
                                       uintptr_t *len);

/**
 * Event log so far as JSON lines.
 *
 * # Safety
 * `device` must be a live handle; `out` must be writable.
 */
IcdsimStatus icdsim_device_events_jsonl(const IcdsimDevice *device, char **out);

/**
 * # Safety
 * `device` must come from `icdsim_device_new` or be NULL.
 */
void icdsim_device_free(IcdsimDevice *device);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICDSIM_H */
