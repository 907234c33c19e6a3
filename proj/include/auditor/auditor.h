/* Copyright 2026 The Auditor Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to the auditor pipeline. Every call returns an auditor_status;
 * on failure auditor_last_error() describes the problem for the calling
 * thread. Strings returned through out-parameters are owned by the caller
 * and released with auditor_string_free(). */

#ifndef AUDITOR_AUDITOR_H_
#define AUDITOR_AUDITOR_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AUDITOR_API __declspec(dllexport)
#else
#define AUDITOR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum auditor_status {
  AUDITOR_OK = 0,
  AUDITOR_INVALID_ARGUMENT = 1,
  AUDITOR_CONFIG = 2,
  AUDITOR_CONFIG_MISMATCH = 3,
  AUDITOR_IO = 4,
  AUDITOR_IMAGE_LOAD = 5,
  AUDITOR_CORRUPT_MANIFEST = 6,
  AUDITOR_REJECTED_EMPTY_MANIFEST = 7,
  AUDITOR_ORACLE_UNAVAILABLE = 8,
  AUDITOR_ORACLE_REJECTED = 9,
  AUDITOR_FIXTURE_MISS = 10,
  AUDITOR_BAD_RESPONSE = 11,
  AUDITOR_DIMENSION_MISMATCH = 12,
  AUDITOR_SPACE_MISMATCH = 13,
  AUDITOR_ZERO_VECTOR = 14,
  AUDITOR_EMPTY_ERROR_SET = 15,
  AUDITOR_UNKNOWN_QUERY_ID = 16,
  AUDITOR_EMPTY_NEIGHBORHOOD = 17,
  AUDITOR_SINGLETON_ERROR_SET = 18,
  AUDITOR_MISSING_GROUND_TRUTH = 19,
  AUDITOR_EMPTY_COUNTS = 20,
  AUDITOR_DUPLICATE_VERDICT = 21,
  AUDITOR_INVALID_VERDICT = 22,
  AUDITOR_UNCOVERED_PREDICTION = 23,
  AUDITOR_STAGE_DEPENDENCY_MISSING = 24,
  AUDITOR_RUN_LOCKED = 25,
  AUDITOR_INTERNAL = 26
} auditor_status;

typedef struct auditor_run auditor_run;

AUDITOR_API const char* auditor_version(void);

/* Message for the most recent failure on this thread; "" after success. */
AUDITOR_API const char* auditor_last_error(void);

/* Process exit code for a status: 0 ok, 2 configuration, 3 oracle,
 * 4 missing stage dependency, 1 anything else. */
AUDITOR_API int auditor_exit_code(auditor_status status);

AUDITOR_API void auditor_string_free(char* s);

/* Opens a run from a config file. run_dir may be NULL to use the config's
 * run_dir. The run directory stays locked until auditor_run_close. */
AUDITOR_API auditor_status auditor_run_open(const char* config_path,
                                            const char* run_dir,
                                            auditor_run** out);

/* Resumes the run in run_dir. config_path may be NULL; when given, a new
 * run is created from it or an existing run must have been created with an
 * equivalent config. */
AUDITOR_API auditor_status auditor_run_open_dir(const char* run_dir,
                                                const char* config_path,
                                                auditor_run** out);

AUDITOR_API void auditor_run_close(auditor_run* run);

/* All stages in order. */
AUDITOR_API auditor_status auditor_run_all(auditor_run* run);

/* One stage by name: extract, detect, embed, caption, score, evaluate,
 * report. *skipped (may be NULL) is set to 1 when the stage was current. */
AUDITOR_API auditor_status auditor_run_stage(auditor_run* run,
                                             const char* stage,
                                             int* skipped);

/* Evaluate stage; gt_manifest may be NULL to use the configured one. */
AUDITOR_API auditor_status auditor_run_evaluate(auditor_run* run,
                                                const char* gt_manifest);

AUDITOR_API auditor_status auditor_run_report(auditor_run* run);

/* Oracle requests that reached the transport during this session, and
 * answers served from cache. Either pointer may be NULL. */
AUDITOR_API auditor_status auditor_run_oracle_calls(const auditor_run* run,
                                                    uint64_t* transport_calls,
                                                    uint64_t* cache_hits);

/* Path of the run directory, owned by the handle. */
AUDITOR_API const char* auditor_run_dir(const auditor_run* run);

/* Ablation sweep. min_sizes and qs are comma-separated integer lists.
 * out_dir may be NULL for <run_dir>/sweep. *tables_json receives
 * tables.json's contents. */
AUDITOR_API auditor_status auditor_sweep(const char* config_path,
                                         const char* run_dir,
                                         const char* min_sizes,
                                         const char* qs, const char* out_dir,
                                         char** tables_json);

/* Aggregates verdict files in verdicts_dir for a comma-separated panel
 * (NULL or "" for every evaluator present). quorum 0 means the whole
 * panel. */
AUDITOR_API auditor_status auditor_aggregate_verdicts(const char* verdicts_dir,
                                                      const char* panel,
                                                      int quorum,
                                                      char** result_json);

/* Writes <run_dir>/review/queue.json for the review UI and returns it.
 * AUDITOR_STAGE_DEPENDENCY_MISSING before the run has been scored. */
AUDITOR_API auditor_status auditor_review_queue(const char* run_dir,
                                                char** queue_json);

/* Runs the protocol conformance suite against an HTTP oracle. Returns
 * AUDITOR_OK only when every endpoint conforms; the report is returned
 * either way when the endpoint answered. */
AUDITOR_API auditor_status auditor_oracle_check(const char* endpoint,
                                                double timeout_seconds,
                                                char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* AUDITOR_AUDITOR_H_ */
