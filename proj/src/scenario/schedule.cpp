#include "scenario/schedule.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

#include <numeric>

namespace drb {

task_schedule make_schedule(std::uint32_t n_classes, std::uint32_t n_tasks,
                            std::uint64_t seed, unsigned epochs_per_task) {
    if (n_tasks == 0 || n_tasks > n_classes)
        throw config_error("make_schedule: need 1 <= T <= K (T=" + std::to_string(n_tasks) +
                           ", K=" + std::to_string(n_classes) + ")");
    std::vector<class_id> classes(n_classes);
    std::iota(classes.begin(), classes.end(), 0u);
    rng_stream rng = rng_stream::keyed(seed, 0, rng_stream::purpose::data_shuffle,
                                       /*k1=*/0xabcd, /*k2=*/0);
    for (std::size_t i = classes.size(); i > 1; --i)
        std::swap(classes[i - 1], classes[rng.bounded(i)]);

    task_schedule schedule;
    schedule.epochs_per_task = epochs_per_task;
    schedule.tasks.resize(n_tasks);
    // Near-equal contiguous chunks: the first (K mod T) tasks get one extra.
    const std::uint32_t base = n_classes / n_tasks;
    const std::uint32_t extra = n_classes % n_tasks;
    std::size_t cursor = 0;
    for (std::uint32_t t = 0; t < n_tasks; ++t) {
        const std::uint32_t size = base + (t < extra ? 1 : 0);
        schedule.tasks[t].assign(classes.begin() + cursor, classes.begin() + cursor + size);
        cursor += size;
    }
    return schedule;
}

std::vector<std::vector<std::size_t>> shard_batches(const std::vector<std::size_t>& task_data,
                                                    worker_id worker, std::uint32_t n_workers,
                                                    unsigned batch_size, std::uint64_t seed,
                                                    std::uint64_t task_index,
                                                    std::uint64_t epoch) {
    if (worker >= n_workers)
        throw usage_error("shard_batches: worker id out of range");
    // The shuffle is keyed by (task, epoch) only, so every worker derives the
    // same permutation and the strided split is a partition.
    std::vector<std::size_t> order = task_data;
    rng_stream rng = rng_stream::keyed(seed, 0, rng_stream::purpose::data_shuffle,
                                       task_index + 1, epoch + 1);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.bounded(i)]);

    std::vector<std::size_t> shard;
    shard.reserve(order.size() / n_workers + 1);
    for (std::size_t i = worker; i < order.size(); i += n_workers)
        shard.push_back(order[i]);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < shard.size(); start += batch_size) {
        const std::size_t end = std::min(shard.size(), start + batch_size);
        batches.emplace_back(shard.begin() + start, shard.begin() + end);
    }
    return batches;
}

std::size_t lockstep_batches(std::size_t task_size, std::uint32_t n_workers,
                             unsigned batch_size) {
    const std::size_t min_shard = task_size / n_workers;
    return (min_shard + batch_size - 1) / batch_size;
}

} // namespace drb
