#pragma once

#include "core/types.hpp"
#include "scenario/dataset.hpp"

#include <cstdint>
#include <vector>

namespace drb {

/// Ordered class-incremental schedule: T pairwise-disjoint class sets whose
/// union is {0..K-1}.
struct task_schedule {
    std::vector<std::vector<class_id>> tasks;
    unsigned epochs_per_task = 1;
};

/**
 * Permute the K classes by seed, then chunk into T consecutive near-equal
 * groups (sizes differ by at most one). Throws config_error when T is 0 or
 * exceeds K.
 */
task_schedule make_schedule(std::uint32_t n_classes, std::uint32_t n_tasks,
                            std::uint64_t seed, unsigned epochs_per_task = 1);

/**
 * One worker's batches for one epoch over `task_data` (dataset indices):
 * seeded per-epoch reshuffle shared by all workers, strided round-robin
 * partition, then chunks of batch_size. Shards are disjoint and cover the
 * task data exactly once per epoch.
 */
std::vector<std::vector<std::size_t>> shard_batches(const std::vector<std::size_t>& task_data,
                                                    worker_id worker, std::uint32_t n_workers,
                                                    unsigned batch_size, std::uint64_t seed,
                                                    std::uint64_t task_index,
                                                    std::uint64_t epoch);

/**
 * Batch count every worker runs in lockstep for a task of `task_size`
 * samples: the smallest shard's batch count. Computable locally, identical
 * on all workers.
 */
std::size_t lockstep_batches(std::size_t task_size, std::uint32_t n_workers,
                             unsigned batch_size);

} // namespace drb
