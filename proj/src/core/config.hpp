#pragma once

#include "core/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace drb {

enum class run_mode { rehearsal, incremental, from_scratch };

run_mode parse_run_mode(const std::string& text);
std::string to_string(run_mode mode);

/// Learning-rate schedule: per-task linear warmup, milestone multipliers,
/// optional linear scaling by worker count, absolute cap.
struct lr_schedule_config {
    double base_rate = 0.05;
    unsigned warmup_epochs = 0;
    // (epoch within task, multiplier applied to the base rate from that epoch on)
    std::vector<std::pair<unsigned, double>> milestones;
    bool scale_with_workers = true;
    double cap = 10.0;
    double momentum = 0.0;
};

/**
 * Full run configuration. Every field maps 1:1 onto a flat key in the
 * config-file format (`key = value` lines, '#' comments) and onto a CLI
 * flag; see config_keys() for the documented key list.
 */
struct run_config {
    unsigned n_workers = 1;
    unsigned n_classes = 10;
    unsigned n_tasks = 4;
    unsigned epochs_per_task = 30;
    unsigned batch_size = 56;       // b
    unsigned rep_count = 7;         // r
    unsigned candidate_count = 14;  // c
    // Per-worker sample budget S_max. 0 means "derive from buffer_fraction
    // once the training-set size is known".
    std::size_t per_worker_capacity = 0;
    double buffer_fraction = 0.30;
    unsigned feature_dim = 24;
    unsigned hidden_dim = 32;
    lr_schedule_config lr;
    std::uint64_t rng_seed = 1;
    std::string roster_path;
    run_mode mode = run_mode::rehearsal;
    std::string dataset_path;
    std::string results_dir = ".";
    unsigned eval_topk = 0; // 0 = auto: 5 when n_classes >= 10, else 1
    unsigned breakdown_window = 35;
    unsigned synth_per_class = 500;
    double synth_separation = 3.0;
    bool verbose = false;

    /// Effective top-k for the headline-adjacent top-k log (auto rule above).
    unsigned effective_topk() const;

    /// S_max for this run; requires per_worker_capacity or buffer_fraction +
    /// a known training-set size.
    std::size_t resolve_capacity(std::size_t train_samples) const;
};

struct roster_entry {
    worker_id id = 0;
    std::string host;
    std::uint16_t port = 0;
};

/// Set one field by its documented key. Throws config_error on unknown keys
/// or unparseable values.
void set_config_key(run_config& cfg, const std::string& key, const std::string& value);

/// Read one field back in its config-file textual form.
std::string get_config_key(const run_config& cfg, const std::string& key);

/// Documented keys in deterministic order, with one-line descriptions.
std::vector<std::pair<std::string, std::string>> config_keys();

run_config load_config_file(const std::string& path);
void write_config_file(const run_config& cfg, const std::string& path);

/// Structural checks that need no dataset: c <= b, slot arithmetic, T <= K...
void validate(const run_config& cfg);

std::vector<roster_entry> parse_roster_lines(const std::vector<std::string>& lines);
std::vector<roster_entry> load_roster_file(const std::string& path);

} // namespace drb
