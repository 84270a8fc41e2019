#pragma once

#include "core/config.hpp"

#include <cstdint>
#include <string>

namespace drb {

struct worker_stats {
    double accuracy_top1 = 0.0;
    double accuracy_topk = 0.0;
    double total_train_seconds = 0.0;
    double total_wait_seconds = 0.0;
    std::uint64_t epochs_trained = 0;
    std::uint64_t iterations = 0;
    std::uint64_t invariant_violations = 0;
};

/**
 * Run one worker of a scenario end to end: load the dataset, join the mesh,
 * train in the configured mode, evaluate after every task, write the result
 * files (rank 0 writes accuracy.csv and summary.txt; every rank writes its
 * breakdown and checksum shards).
 */
worker_stats run_worker(const run_config& cfg, worker_id rank);

/// Resolve the mesh roster: the file when configured, a synthetic
/// single-worker loopback entry when N == 1 and no file is given.
std::vector<roster_entry> resolve_roster(const run_config& cfg);

} // namespace drb
