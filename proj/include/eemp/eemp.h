/* C interface to the eemp pipeline library.
 *
 * All functions return an eemp_status. On failure the message is available
 * from eemp_last_error() on the calling thread until the next call.
 * Strings handed out through char** parameters are owned by the caller and
 * must be released with eemp_string_free.
 */
#ifndef EEMP_EEMP_H
#define EEMP_EEMP_H

#include <stddef.h>

#if defined(EEMP_BUILDING_LIBRARY)
#define EEMP_API __attribute__((visibility("default")))
#else
#define EEMP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eemp_status {
  EEMP_OK = 0,
  EEMP_ERR_INTERNAL = 1,
  EEMP_ERR_CONFIG = 2,
  EEMP_ERR_UPSTREAM_MISSING = 3,
  EEMP_ERR_DATA = 4,
  EEMP_ERR_SCORER = 5,
  EEMP_ERR_INVALID_ARGUMENT = 6
} eemp_status;

typedef struct eemp_config eemp_config;
typedef struct eemp_model eemp_model;

/* Called with one progress line at a time; may be NULL. */
typedef void (*eemp_progress_fn)(const char* line, void* user_data);

EEMP_API const char* eemp_version(void);
EEMP_API const char* eemp_last_error(void);
EEMP_API void eemp_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

EEMP_API eemp_status eemp_config_new(eemp_config** out);
/* Parses a key = value file into a fresh config. */
EEMP_API eemp_status eemp_config_load(const char* path, eemp_config** out);
/* Later sets win, so apply command-line flags after loading. */
EEMP_API eemp_status eemp_config_set(eemp_config* config, const char* key, const char* value);
/* Effective value (explicit or default) into *out, or NULL when unset. */
EEMP_API eemp_status eemp_config_get(const eemp_config* config, const char* key, char** out);
/* Newline-separated "key\tdefault\thelp" lines for every recognised key. */
EEMP_API eemp_status eemp_config_keys(char** out);
EEMP_API void eemp_config_free(eemp_config* config);

/* ---- pipeline subcommands --------------------------------------------- */

/* Runs a subcommand by name (see eemp_command_names) and returns its report. */
EEMP_API eemp_status eemp_run(const char* command, const eemp_config* config, eemp_progress_fn progress,
                              void* user_data, char** report);
/* Newline-separated subcommand names. */
EEMP_API eemp_status eemp_command_names(char** out);

EEMP_API eemp_status eemp_ingest(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_synth(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_score(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_select(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_stats(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_init_base(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_train_expert(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_compose_moe(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_ablate(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_train_router(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_generate(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_evaluate(const eemp_config* config, char** report);
EEMP_API eemp_status eemp_abtest_build(const eemp_config* config, char** report);
/* Blocks while serving. */
EEMP_API eemp_status eemp_abtest_serve(const eemp_config* config, eemp_progress_fn progress, void* user_data);
EEMP_API eemp_status eemp_abtest_report(const eemp_config* config, char** report);

/* ---- building blocks -------------------------------------------------- */

/* Parses a judge reply into integer scores in 0..10. */
EEMP_API eemp_status eemp_parse_scores(const char* reply, int* sensibility, int* rationality);
/* 0 sensibility, 1 discard, 2 rationality. */
EEMP_API eemp_status eemp_classify(int sensibility, int rationality, int threshold, int* subset);

/* Loads a dense or MoE checkpoint. */
EEMP_API eemp_status eemp_model_load(const char* path, eemp_model** out);
EEMP_API eemp_status eemp_model_is_moe(const eemp_model* model, int* is_moe);
/* context_json: array of {"role": "speaker"|"listener", "text": ...}. */
EEMP_API eemp_status eemp_model_generate(const eemp_model* model, const char* context_json, int max_tokens,
                                         char** response);
/* Mean response-token NLL over a JSON-lines instance file. */
EEMP_API eemp_status eemp_model_nll(const eemp_model* model, const char* instances_path, double* nll);
EEMP_API void eemp_model_free(eemp_model* model);

#ifdef __cplusplus
}
#endif

#endif
