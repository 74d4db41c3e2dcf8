/* Copyright (c) 2026, HyperLoRA contributors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef HYPERLORA_HYPERLORA_H
#define HYPERLORA_HYPERLORA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HL_API __declspec(dllexport)
#else
#define HL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum hl_status {
  HL_OK = 0,
  HL_ERR_USAGE = 1,   /* bad arguments or config */
  HL_ERR_DATA = 2,    /* missing, malformed or mismatched files */
  HL_ERR_NUMERIC = 3  /* NaN or Inf detected */
} hl_status;

typedef struct hl_config hl_config;
typedef struct hl_model hl_model;

/* Called once per finished training epoch with a one-line summary. */
typedef void (*hl_progress_fn)(const char* line, void* user);

HL_API const char* hl_version(void);

/* Message of the last failed call on this thread; empty after success. */
HL_API const char* hl_last_error(void);

HL_API hl_status hl_config_parse(const char* json_text, hl_config** out);
HL_API hl_status hl_config_load(const char* path, hl_config** out);
HL_API void hl_config_free(hl_config* config);

/* Defaults-resolved config as JSON; release with hl_string_free. */
HL_API hl_status hl_config_effective_json(const hl_config* config, char** out);
HL_API void hl_string_free(char* s);

HL_API hl_status hl_gen_data(const hl_config* config, const char* out_dir);
HL_API hl_status hl_train(const hl_config* config, const char* data_dir, const char* out_dir,
                          hl_progress_fn progress, void* user);

typedef struct hl_eval_options {
  const char* checkpoint;    /* may be NULL when scores_path is set */
  const char* data_dir;      /* required with a checkpoint; optional split filter otherwise */
  const char* scores_path;   /* score file used instead of the model */
  const char* split;         /* NULL: config default */
  int64_t bootstrap_iters;   /* negative: config default */
  uint64_t seed;
  int has_seed;
} hl_eval_options;

HL_API void hl_eval_options_init(hl_eval_options* opts);
HL_API hl_status hl_eval(const hl_eval_options* opts, const char* out_dir);

HL_API hl_status hl_dca(const char* scores_path, const char* out_dir, double t_lo, double t_hi, size_t steps);

/* mode: "factors", "materialized" or NULL for the checkpoint's config. */
HL_API hl_status hl_analyze(const char* checkpoint, const char* out_dir, const char* mode);

/* out_dir may be NULL. report receives the printable table; free with hl_string_free. */
HL_API hl_status hl_param_audit(const hl_config* config, const char* out_dir, char** report);

HL_API hl_status hl_model_load(const char* checkpoint, hl_model** out);
HL_API void hl_model_free(hl_model* model);
HL_API size_t hl_model_num_tasks(const hl_model* model);
/* Probability for one task from a volume file. */
HL_API hl_status hl_model_predict_volume(const hl_model* model, const char* volume_path, size_t task,
                                         double* probability);

#ifdef __cplusplus
}
#endif

#endif
