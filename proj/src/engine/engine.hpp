#pragma once

#include "buffer/rehearsal_buffer.hpp"
#include "core/config.hpp"
#include "core/rng.hpp"
#include "core/types.hpp"
#include "sampler/sampler.hpp"
#include "sampler/size_table.hpp"
#include "transport/client.hpp"
#include "transport/wire.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <future>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace drb {

/// Request-id namespace tag for pipeline sample fetches; the round index
/// lives in the low bits and gates remote service (see engine::serve_sample).
constexpr std::uint64_t k_sample_tag = 1ULL << 60;
constexpr std::uint64_t k_seq_mask = (1ULL << 59) - 1;

/**
 * The asynchronous update primitive. update(m) hands back the
 * representatives collected by the sampling round launched during the
 * previous iteration (an empty list on iteration 0), then queues this
 * round's work on the background pipeline: insert candidates from m,
 * broadcast the new occupancy row, and launch global sampling for the next
 * iteration. The training thread blocks only while the previous round is
 * unresolved; that blocked time is accounted in wait_time.
 *
 * At most one sampling round is in flight per worker; candidates of
 * mini-batch i are always inserted before the round consumed at iteration
 * i+1 is planned.
 */
class engine {
public:
    struct timings {
        std::uint64_t iteration = 0;
        double populate_ms = 0.0;
        double augment_ms = 0.0; // plan + fetch, including the size rendezvous
        double latency_ms = 0.0; // enqueue to promise resolution
        double wait_ms = 0.0;    // training-thread block consuming this round's successor
        std::uint32_t degraded = 0;
    };

    /// client is null for single-worker runs.
    engine(const run_config& cfg, worker_id self, rehearsal_buffer& buffer, size_table& table,
           rpc_client* client);
    ~engine();

    engine(const engine&) = delete;
    engine& operator=(const engine&) = delete;

    /// Spawn the background pipeline. Double start is a usage error.
    void start();

    /// Returns this iteration's representatives; see class comment.
    std::vector<sample> update(const mini_batch& m);

    /// Drain queued buffer updates, cancel pending sampling, stop.
    void shutdown();

    // -- hooks wired into the worker's rpc_server ----------------------------

    /**
     * Serve a bulk read. Requests tagged k_sample_tag wait until this
     * worker's buffer update for the same round has been applied, so remote
     * plans built on broadcast occupancy rows always see valid slots; the
     * wait is bounded by the pipeline skew (at most one round) and falls
     * back to serving the current state on timeout.
     */
    wire::sample_response serve_sample(const wire::sample_request& req,
                                       std::uint64_t request_id);

    void on_size_bcast(const wire::size_bcast& msg);

    /// Re-broadcast the freshest occupancy row (task boundaries).
    void broadcast_sizes();

    // -- instrumentation ------------------------------------------------------

    double total_wait_ms() const { return m_total_wait_ms.load(); }
    std::uint64_t iterations() const { return m_iteration.load(); }
    std::size_t queue_depth() const;
    std::uint64_t degraded_rounds() const { return m_degraded_rounds.load(); }
    std::uint64_t replanned_entries() const { return m_replanned.load(); }
    std::vector<timings> drain_timings();

private:
    struct job {
        mini_batch batch;
        std::uint64_t round = 0;
        std::promise<std::vector<sample>> promise;
    };

    void pipeline_main();
    void run_round(job& j);
    void publish_row(std::uint64_t round);

    const run_config& m_cfg;
    worker_id m_self;
    rehearsal_buffer& m_buffer;
    size_table& m_table;
    rpc_client* m_client;

    rng_stream m_candidate_rng;
    rng_stream m_eviction_rng;
    rng_stream m_sampling_rng;
    rng_stream m_substitute_rng;
    rng_stream m_replan_rng;
    std::mutex m_serve_substitute_lock;
    rng_stream m_serve_substitute_rng;

    std::thread m_pipeline;
    std::mutex m_queue_lock;
    std::condition_variable m_queue_cv;
    std::optional<job> m_queued;

    std::future<std::vector<sample>> m_pending;
    std::atomic<std::uint64_t> m_iteration{0};

    // Pipeline progress gate: number of completed buffer updates.
    mutable std::mutex m_progress_lock;
    std::condition_variable m_progress_cv;
    std::uint64_t m_updates_done = 0;
    wire::occupancy_row m_last_row;

    std::mutex m_timings_lock;
    std::vector<timings> m_timings;
    std::atomic<double> m_total_wait_ms{0.0};
    std::atomic<std::uint64_t> m_degraded_rounds{0};
    std::atomic<std::uint64_t> m_replanned{0};

    std::atomic<bool> m_started{false};
    std::atomic<bool> m_stopping{false};
    std::atomic<bool> m_shut_down{false};
    std::atomic<bool> m_dead{false};
    std::string m_death_reason;
};

} // namespace drb
