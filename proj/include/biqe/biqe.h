#ifndef BIQE_BIQE_H
#define BIQE_BIQE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(BIQE_BUILDING)
#    define BIQE_API __declspec(dllexport)
#  else
#    define BIQE_API __declspec(dllimport)
#  endif
#else
#  define BIQE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum biqe_status {
  BIQE_OK = 0,
  BIQE_ERR_INVALID_ARGUMENT = 1,
  BIQE_ERR_IO = 2,
  BIQE_ERR_PARSE = 3,
  BIQE_ERR_NOT_FOUND = 4,
  BIQE_ERR_NUMERIC = 5,
  BIQE_ERR_INTERNAL = 6
} biqe_status;

typedef struct biqe_config biqe_config;
typedef struct biqe_kg biqe_kg;
typedef struct biqe_model biqe_model;

/* Library version string; static storage. */
BIQE_API const char* biqe_version(void);

/* Message of the last failed call on this thread; empty after a success. */
BIQE_API const char* biqe_last_error(void);

/* Releases strings returned through char** out parameters. */
BIQE_API void biqe_string_free(char* s);

/* Run configuration: every key has a default; unknown keys are rejected. */
BIQE_API biqe_status biqe_config_new(biqe_config** out);
BIQE_API void biqe_config_free(biqe_config* config);
BIQE_API biqe_status biqe_config_set(biqe_config* config, const char* key, const char* value);
BIQE_API biqe_status biqe_config_get(const biqe_config* config, const char* key, char** out);
BIQE_API biqe_status biqe_config_load_file(biqe_config* config, const char* path);
/* Applies BIQE_<UPPERCASE KEY> environment variables. */
BIQE_API biqe_status biqe_config_load_env(biqe_config* config);
/* Sorted key=value lines. */
BIQE_API biqe_status biqe_config_dump(const biqe_config* config, char** out);

/* Pipeline commands; *summary receives a printable report. */
BIQE_API biqe_status biqe_run_generate(const biqe_config* config, char** summary);
BIQE_API biqe_status biqe_run_train(const biqe_config* config, char** summary);
BIQE_API biqe_status biqe_run_eval(const biqe_config* config, char** summary);
BIQE_API biqe_status biqe_run_analyze(const biqe_config* config, char** summary);

/* Tab-separated triple file. */
BIQE_API biqe_status biqe_kg_load(const char* path, biqe_kg** out);
BIQE_API void biqe_kg_free(biqe_kg* kg);
BIQE_API size_t biqe_kg_num_entities(const biqe_kg* kg);
BIQE_API size_t biqe_kg_num_relations(const biqe_kg* kg);
BIQE_API size_t biqe_kg_num_triples(const biqe_kg* kg);

/* Encoder or GQE-MP checkpoint. */
BIQE_API biqe_status biqe_model_load(const char* path, biqe_model** out);
BIQE_API void biqe_model_free(biqe_model* model);
/* "biqe" or "gqe-mp"; static storage. */
BIQE_API const char* biqe_model_kind(const biqe_model* model);
/* query_json: one query line of the dataset format (token ids). *out receives
   {"<target node>": [top_k entity ids, best first], ...}. */
BIQE_API biqe_status biqe_model_predict(const biqe_model* model, const char* query_json, size_t top_k,
                                        char** out);

#ifdef __cplusplus
}
#endif

#endif
