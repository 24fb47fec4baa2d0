#ifndef ALV_H
#define ALV_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the engine's error taxonomy.
 */
typedef enum AlvStatus {
  ALV_STATUS_ALV_OK = 0,
  ALV_STATUS_ALV_NULL_POINTER = 1,
  ALV_STATUS_ALV_INVALID_UTF8 = 2,
  ALV_STATUS_ALV_CONFIG_ERROR = 3,
  ALV_STATUS_ALV_VALIDATION_ERROR = 4,
  ALV_STATUS_ALV_SHAPE_ERROR = 5,
  ALV_STATUS_ALV_DOMAIN_ERROR = 6,
  ALV_STATUS_ALV_PRECONDITION_ERROR = 7,
  ALV_STATUS_ALV_RUNTIME_ERROR = 8,
} AlvStatus;

/**
 * Opaque report handle.
 */
typedef struct AlvReport AlvReport;

/**
 * Opaque scenario handle.
 */
typedef struct AlvScenario AlvScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load and validate a scenario from a JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be a valid
 * pointer. On success `*out` owns the scenario until `alv_scenario_free`.
 */
enum AlvStatus alv_scenario_load(const char *path, struct AlvScenario **out);

/**
 * Parse and validate a scenario from a JSON string.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be a valid
 * pointer. On success `*out` owns the scenario until `alv_scenario_free`.
 */
enum AlvStatus alv_scenario_from_json(const char *json, struct AlvScenario **out);

/**
 * Release a scenario handle (NULL is a no-op).
 *
 * # Safety
 * `scenario` must be NULL or a pointer obtained from a scenario constructor,
 * not yet freed.
 */
void alv_scenario_free(struct AlvScenario *scenario);

/**
 * Run every suite of the scenario. `seed_override` and `samples_override`
 * replace the scenario's sampling parameters when ≥ 0; `tol_scale`
 * multiplies every tolerance (pass 1.0 for the defaults).
 *
 * # Safety
 * `scenario` must be a live scenario handle; `out` must be a valid pointer.
 * On success `*out` owns the report until `alv_report_free`.
 */
enum AlvStatus alv_scenario_run(const struct AlvScenario *scenario,
                                int64_t seed_override,
                                int64_t samples_override,
                                double tol_scale,
                                struct AlvReport **out);

/**
 * 1 if every suite passed, 0 otherwise (or on NULL).
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
int32_t alv_report_pass(const struct AlvReport *report);

/**
 * Number of suites in the report (0 on NULL).
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
uintptr_t alv_report_suite_count(const struct AlvReport *report);

/**
 * The report as a JSON string; NULL on error. Free with `alv_string_free`.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
char *alv_report_json(const struct AlvReport *report);

/**
 * Release a report handle (NULL is a no-op).
 *
 * # Safety
 * `report` must be NULL or a pointer obtained from `alv_scenario_run`, not
 * yet freed.
 */
void alv_report_free(struct AlvReport *report);

/**
 * Release a string returned by this library (NULL is a no-op).
 *
 * # Safety
 * `s` must be NULL or a pointer returned by an `alv_*` function that
 * documents `alv_string_free`, not yet freed.
 */
void alv_string_free(char *s);

/**
 * The last error message on this thread, or NULL if none. Free with
 * `alv_string_free`.
 */
char *alv_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALV_H */
