#include "drb.h"

#include "core/config.hpp"
#include "core/errors.hpp"
#include "runner/bias.hpp"
#include "runner/overlap.hpp"
#include "runner/worker.hpp"
#include "scenario/dataset.hpp"

#include <cstring>
#include <string>

namespace {

thread_local std::string t_last_error = "";

struct config_impl {
    drb::run_config cfg;
};

drb::run_config& unwrap(drb_config* c) {
    return reinterpret_cast<config_impl*>(c)->cfg;
}

const drb::run_config& unwrap(const drb_config* c) {
    return reinterpret_cast<const config_impl*>(c)->cfg;
}

drb_status status_of(const std::exception& e) {
    t_last_error = e.what();
    if (dynamic_cast<const drb::config_error*>(&e))
        return DRB_ERR_CONFIG;
    if (dynamic_cast<const drb::io_error*>(&e))
        return DRB_ERR_IO;
    if (dynamic_cast<const drb::protocol_error*>(&e))
        return DRB_ERR_PROTOCOL;
    if (dynamic_cast<const drb::transport_error*>(&e))
        return DRB_ERR_TRANSPORT;
    if (dynamic_cast<const drb::training_error*>(&e))
        return DRB_ERR_TRAINING;
    if (dynamic_cast<const drb::engine_error*>(&e))
        return DRB_ERR_TRAINING;
    if (dynamic_cast<const drb::usage_error*>(&e))
        return DRB_ERR_USAGE;
    return DRB_ERR_INTERNAL;
}

template <typename fn>
drb_status guarded(fn&& f) {
    try {
        f();
        return DRB_OK;
    } catch (const std::exception& e) {
        return status_of(e);
    } catch (...) {
        t_last_error = "unknown error";
        return DRB_ERR_INTERNAL;
    }
}

} // namespace

extern "C" {

const char* drb_version(void) {
    return "0.1.0";
}

const char* drb_last_error(void) {
    return t_last_error.c_str();
}

drb_config* drb_config_create(void) {
    return reinterpret_cast<drb_config*>(new (std::nothrow) config_impl());
}

void drb_config_destroy(drb_config* config) {
    delete reinterpret_cast<config_impl*>(config);
}

drb_status drb_config_load(drb_config* config, const char* path) {
    if (config == nullptr || path == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { unwrap(config) = drb::load_config_file(path); });
}

drb_status drb_config_save(const drb_config* config, const char* path) {
    if (config == nullptr || path == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { drb::write_config_file(unwrap(config), path); });
}

drb_status drb_config_set(drb_config* config, const char* key, const char* value) {
    if (config == nullptr || key == nullptr || value == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { drb::set_config_key(unwrap(config), key, value); });
}

drb_status drb_config_get(const drb_config* config, const char* key, char* buffer,
                          size_t buffer_len) {
    if (config == nullptr || key == nullptr || buffer == nullptr || buffer_len == 0) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        const std::string value = drb::get_config_key(unwrap(config), key);
        if (value.size() + 1 > buffer_len)
            throw drb::usage_error("buffer too small for key '" + std::string(key) + "'");
        std::memcpy(buffer, value.c_str(), value.size() + 1);
    });
}

size_t drb_config_key_count(void) {
    return drb::config_keys().size();
}

const char* drb_config_key_name(size_t index) {
    static thread_local std::string name;
    const auto keys = drb::config_keys();
    if (index >= keys.size())
        return nullptr;
    name = keys[index].first;
    return name.c_str();
}

const char* drb_config_key_help(size_t index) {
    static thread_local std::string help;
    const auto keys = drb::config_keys();
    if (index >= keys.size())
        return nullptr;
    help = keys[index].second;
    return help.c_str();
}

drb_status drb_config_validate(const drb_config* config) {
    if (config == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { drb::validate(unwrap(config)); });
}

drb_status drb_generate_dataset(const drb_config* config, const char* out_path) {
    if (config == nullptr || out_path == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        const auto& cfg = unwrap(config);
        const auto data = drb::synth_dataset(cfg.n_classes, cfg.synth_per_class,
                                             cfg.feature_dim, cfg.synth_separation,
                                             cfg.rng_seed);
        drb::write_dataset(data, out_path);
    });
}

drb_status drb_run_worker(const drb_config* config, uint32_t rank, drb_run_stats* stats) {
    if (config == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        const auto result = drb::run_worker(unwrap(config), rank);
        if (stats != nullptr) {
            stats->accuracy_top1 = result.accuracy_top1;
            stats->accuracy_topk = result.accuracy_topk;
            stats->total_train_seconds = result.total_train_seconds;
            stats->total_wait_seconds = result.total_wait_seconds;
            stats->epochs_trained = result.epochs_trained;
            stats->iterations = result.iterations;
            stats->invariant_violations = result.invariant_violations;
        }
    });
}

drb_status drb_bias_test(const drb_config* config, uint32_t rank, uint64_t draws,
                         uint64_t fill, int biased_control, double* p_value) {
    if (config == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        const auto report =
            drb::run_bias_test(unwrap(config), rank, draws, fill, biased_control != 0);
        if (p_value != nullptr)
            *p_value = report.p_value;
    });
}

drb_status drb_overlap_bench(const drb_config* config, uint32_t rank, double train_cost_ms,
                             uint64_t iterations, drb_overlap_stats* stats) {
    if (config == nullptr) {
        t_last_error = "null argument";
        return DRB_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        const auto result =
            drb::run_overlap_bench(unwrap(config), rank, train_cost_ms, iterations);
        if (stats != nullptr) {
            stats->train_cost_ms = result.train_cost_ms;
            stats->background_ms = result.background_ms;
            stats->mean_wait_ms = result.mean_wait_ms;
            stats->mean_iteration_ms = result.mean_iteration_ms;
            stats->iterations = result.iterations;
        }
    });
}

} // extern "C"
