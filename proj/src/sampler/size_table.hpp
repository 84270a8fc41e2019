#pragma once

#include "core/types.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

namespace drb {

/**
 * Cached view of every peer's per-class occupancy, the basis for globally
 * uniform sampling. Rows arrive from SIZE_BCAST frames and SAMPLE_RESP
 * piggybacks and are merged keeping the highest version per worker; the
 * local worker's row is written directly and is always current.
 *
 * Rows are additionally kept per version so a sampling round can consume
 * every peer's row at one exact pipeline horizon, which is what makes plans
 * reproducible run to run. Single writer (the pipeline thread) per local
 * row, many readers.
 */
class size_table {
public:
    size_table(std::uint32_t n_workers, std::uint32_t n_classes, worker_id self);

    /// Merge one worker's row at `version`; keeps history for horizon reads.
    void store_row(worker_id worker, std::uint64_t version,
                   const std::vector<std::uint32_t>& occupancy);

    struct view {
        std::uint32_t n_workers = 0;
        std::uint32_t n_classes = 0;
        std::vector<std::vector<std::uint32_t>> occupancy; // [worker][class]
        std::uint64_t total = 0;

        slot_ref locate(std::uint64_t flat_index) const;
        std::uint64_t worker_total(worker_id w) const;
    };

    /// Consistent copy using the highest known version per worker.
    view latest_view() const;

    /**
     * Copy in which every row is the one stored at exactly `horizon`
     * (waiting up to `timeout` for laggards). Workers that never produce the
     * horizon row fall back to their freshest row at or below it; complete
     * absence leaves zeros. Returns the number of workers that fell back.
     */
    view view_at(std::uint64_t horizon, std::chrono::milliseconds timeout,
                 std::uint32_t* degraded_out = nullptr) const;

    std::uint64_t latest_version(worker_id worker) const;

    /// Drop per-version history strictly below `floor` (latest rows survive).
    void prune_below(std::uint64_t floor);

    /// Wake pending view_at() waits; they return degraded views (shutdown path).
    void interrupt();

    std::uint32_t n_workers() const { return m_n_workers; }
    std::uint32_t n_classes() const { return m_n_classes; }
    worker_id self() const { return m_self; }

private:
    struct worker_rows {
        std::map<std::uint64_t, std::vector<std::uint32_t>> by_version;
        std::uint64_t latest = 0;
        bool any = false;
    };

    std::uint32_t m_n_workers;
    std::uint32_t m_n_classes;
    worker_id m_self;
    mutable std::mutex m_lock;
    mutable std::condition_variable m_cv;
    std::vector<worker_rows> m_rows;
    bool m_interrupted = false;
};

} // namespace drb
