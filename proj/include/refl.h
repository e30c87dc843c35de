/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the face-restoration ReFL toolkit.
 *
 * Every call returns a refl_status. On failure refl_last_error() describes the
 * problem; the message belongs to the calling thread and stays valid until its
 * next call into the library. Strings returned through char** out-parameters
 * are owned by the caller and released with refl_string_free().
 */
#ifndef REFL_H
#define REFL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(REFL_BUILDING_LIBRARY)
#define REFL_API __attribute__((visibility("default")))
#else
#define REFL_API
#endif

typedef enum refl_status {
  REFL_OK = 0,
  REFL_ERR_INVALID_ARGUMENT = 1,
  REFL_ERR_CONFIG = 2,
  REFL_ERR_DEPENDENCY = 3,
  REFL_ERR_IO = 4,
  REFL_ERR_STATE = 5,
  REFL_ERR_CONFLICT = 6,
  REFL_ERR_NOT_FOUND = 7,
  REFL_ERR_INTERNAL = 8
} refl_status;

/* A run configuration bound to a run directory. */
typedef struct refl_run refl_run;
/* A running annotation service. */
typedef struct refl_server refl_server;

typedef void (*refl_log_fn)(const char* message, void* user);

REFL_API const char* refl_version(void);
REFL_API const char* refl_last_error(void);
REFL_API const char* refl_status_name(refl_status status);
REFL_API void refl_string_free(char* s);

/* config_path may be NULL for defaults. With apply_env nonzero, REFL_* environment
 * variables override the file (REFL_REFL__ITERATIONS=50 sets refl.iterations). */
REFL_API refl_status refl_run_create(const char* config_path, int apply_env, refl_run** out);
REFL_API void refl_run_destroy(refl_run* run);
/* Sets a dotted key ("refl.iterations") to a JSON value; bare words are taken as strings. */
REFL_API refl_status refl_run_set(refl_run* run, const char* key, const char* json_value);
REFL_API refl_status refl_run_config(const refl_run* run, char** out_json);
REFL_API refl_status refl_run_set_logger(refl_run* run, refl_log_fn fn, void* user);

/* Runs the named stages in order (the configured stage list when count is 0).
 * out_json, if not NULL, receives one summary object per stage. */
REFL_API refl_status refl_run_stages(refl_run* run, const char* const* stages, size_t count, int force,
                                     char** out_json);

/* Records a human label ("a" or "b"). out_outcome receives accepted,
 * already_labeled, leased_elsewhere, not_found, not_eligible or stale_lease. */
REFL_API refl_status refl_label(refl_run* run, const char* pair_id, const char* choice, char** out_outcome);

/* Starts the annotation HTTP service in the background. port 0 picks a free port. */
REFL_API refl_status refl_server_start(refl_run* run, const char* host, int port, const char* ui_dir,
                                       refl_server** out, int* bound_port);
/* Stops the service and flushes the label log. */
REFL_API refl_status refl_server_stop(refl_server* server);
REFL_API void refl_server_destroy(refl_server* server);

REFL_API refl_status refl_hacking_probe(refl_run* run, const char* restorer_ckpt, const char* frm_ckpt,
                                        char** out_json);
REFL_API refl_status refl_compare_reports(const char* report_a, const char* report_b, char** out_json);
REFL_API refl_status refl_image_metrics(const char* image_path, const char* ref_path, char** out_json);
/* Mean gradient histogram of `count` clean faces, as a JSON array. */
REFL_API refl_status refl_naturalness_reference(int count, uint64_t seed, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* REFL_H */
