#ifndef DRB_H
#define DRB_H

/*
 * C interface to the distributed rehearsal-buffer engine. The core is C++;
 * everything here goes through opaque handles and status codes so the
 * library can be driven from C, a CLI, or any FFI.
 *
 * A handle is created with drb_config_create(), populated from a config file
 * and/or individual key assignments (the key set mirrors the config-file
 * format; see drb_config_key_count/drb_config_key_name), validated, and then
 * passed to one of the run entry points. Every worker of a run is one
 * process calling drb_run_worker() with its rank; process launching is the
 * caller's business (the bundled CLI does it for localhost meshes).
 *
 * All functions returning drb_status set a thread-local message retrievable
 * with drb_last_error() on failure.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DRB_API __declspec(dllexport)
#else
#define DRB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum drb_status {
    DRB_OK = 0,
    DRB_ERR_INVALID_ARGUMENT = 1,
    DRB_ERR_CONFIG = 2,
    DRB_ERR_IO = 3,
    DRB_ERR_TRANSPORT = 4,
    DRB_ERR_PROTOCOL = 5,
    DRB_ERR_TRAINING = 6,
    DRB_ERR_USAGE = 7,
    DRB_ERR_INTERNAL = 8
} drb_status;

typedef struct drb_config drb_config;

DRB_API const char* drb_version(void);

/* Last error message of the calling thread; never NULL. */
DRB_API const char* drb_last_error(void);

DRB_API drb_config* drb_config_create(void);
DRB_API void drb_config_destroy(drb_config* config);

/* Flat key-value config file; unknown keys are rejected. */
DRB_API drb_status drb_config_load(drb_config* config, const char* path);
DRB_API drb_status drb_config_save(const drb_config* config, const char* path);

DRB_API drb_status drb_config_set(drb_config* config, const char* key, const char* value);
DRB_API drb_status drb_config_get(const drb_config* config, const char* key, char* buffer,
                                  size_t buffer_len);

/* Documented key enumeration (stable order). */
DRB_API size_t drb_config_key_count(void);
DRB_API const char* drb_config_key_name(size_t index);
DRB_API const char* drb_config_key_help(size_t index);

DRB_API drb_status drb_config_validate(const drb_config* config);

/* Write a synthetic dataset (and its .split sidecar) to out_path. */
DRB_API drb_status drb_generate_dataset(const drb_config* config, const char* out_path);

typedef struct drb_run_stats {
    double accuracy_top1;
    double accuracy_topk;
    double total_train_seconds;
    double total_wait_seconds;
    uint64_t epochs_trained;
    uint64_t iterations;
    uint64_t invariant_violations;
} drb_run_stats;

/*
 * Run one worker of the configured scenario to completion. Result files are
 * written into the configured results_dir. stats may be NULL.
 */
DRB_API drb_status drb_run_worker(const drb_config* config, uint32_t rank,
                                  drb_run_stats* stats);

/*
 * Global-sampling bias test: freeze `fill` samples across the mesh, draw
 * `draws` plans on rank 0, chi-square the slot counts. biased_control != 0
 * runs the deliberately local-only planner instead. p_value may be NULL and
 * is only written on rank 0.
 */
DRB_API drb_status drb_bias_test(const drb_config* config, uint32_t rank, uint64_t draws,
                                 uint64_t fill, int biased_control, double* p_value);

typedef struct drb_overlap_stats {
    double train_cost_ms;
    double background_ms;
    double mean_wait_ms;
    double mean_iteration_ms;
    uint64_t iterations;
} drb_overlap_stats;

/*
 * Overlap benchmark: drive the buffer engine with a sleep-based training
 * stub of train_cost_ms (negative = auto: 10x measured background cost) and
 * report the mean blocked time per iteration. stats may be NULL.
 */
DRB_API drb_status drb_overlap_bench(const drb_config* config, uint32_t rank,
                                     double train_cost_ms, uint64_t iterations,
                                     drb_overlap_stats* stats);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DRB_H */
