#pragma once

#include "transport/client.hpp"
#include "transport/wire.hpp"

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <vector>

namespace drb {

/**
 * Blocking mean all-reduce over the worker mesh, flat-tree topology: rank 0
 * collects every contribution, reduces in rank order (fixed order, so
 * repeated runs give bitwise-equal results), and replies with the mean.
 * Every worker must call run() with equal-length vectors for the same
 * sequence number; a peer failure aborts the collective with the sequence
 * number in the error.
 */
class allreduce_op {
public:
    /// client may be null when n_workers == 1.
    allreduce_op(worker_id rank, std::uint32_t n_workers, rpc_client* client,
                 int timeout_ms = 120000);

    std::vector<float> run(std::uint64_t seq, std::span<const float> input);

    /// Server hook on rank 0: deposit a peer contribution, reply deferred
    /// until the collective completes. Never blocks.
    void deliver(wire::allreduce_chunk&& msg,
                 std::function<void(const wire::allreduce_chunk&)> reply);

    /// Unblock any waiting collective with an error (engine shutdown path).
    void abort(const std::string& why);

    static std::uint64_t request_id_for(std::uint64_t seq);

private:
    struct round {
        std::vector<std::vector<float>> inputs;                       // by rank
        std::vector<char> present;                                    // by rank
        std::vector<std::function<void(const wire::allreduce_chunk&)>> replies; // by rank
        std::uint32_t arrived = 0;
    };

    round& round_for(std::uint64_t seq);

    worker_id m_rank;
    std::uint32_t m_n;
    rpc_client* m_client;
    int m_timeout_ms;
    std::mutex m_lock;
    std::condition_variable m_cv;
    std::map<std::uint64_t, round> m_rounds;
    bool m_aborted = false;
    std::string m_abort_reason;
};

} // namespace drb
