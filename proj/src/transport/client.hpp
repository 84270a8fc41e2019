#pragma once

#include "core/config.hpp"
#include "transport/socket.hpp"
#include "transport/wire.hpp"

#include <atomic>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace drb {

/**
 * Client half of the RPC layer: one lazily established connection per peer,
 * any number of requests in flight, replies matched to futures by request_id
 * regardless of arrival order. A dedicated reader thread per connection
 * resolves the pending futures, so callers never block on the wire unless
 * they wait on a returned future.
 */
class rpc_client {
public:
    rpc_client(std::vector<roster_entry> roster, worker_id self, std::uint32_t feature_dim,
               int connect_retry_ms = 10000);
    ~rpc_client();

    rpc_client(const rpc_client&) = delete;
    rpc_client& operator=(const rpc_client&) = delete;

    /// Consolidated bulk read; resolves to the peer's response or throws a
    /// transport_error out of future::get().
    std::future<wire::sample_response> send_sample_request(worker_id peer,
                                                           const wire::sample_request& req,
                                                           std::uint64_t request_id);

    /// One-way occupancy broadcast (no reply expected).
    void send_size_bcast(worker_id peer, const wire::size_bcast& msg);

    /// Contribution to a collective; resolves to the reduced vector.
    std::future<std::vector<float>> send_allreduce(worker_id peer,
                                                   const wire::allreduce_chunk& msg,
                                                   std::uint64_t request_id);

    /// One-way shutdown frame; connection errors are swallowed.
    void send_shutdown(worker_id peer);

    void close_all();

    bool peer_down(worker_id peer) const;

    /// SAMPLE_REQ frames sent so far (consolidation accounting).
    std::uint64_t sample_req_frames() const {
        return m_sample_req_frames.load(std::memory_order_relaxed);
    }

private:
    struct pending {
        enum class kind { sample, reduce } k;
        std::promise<wire::sample_response> sample_promise;
        std::promise<std::vector<float>> reduce_promise;
    };

    struct connection {
        socket_fd fd;
        std::mutex write_lock;
        std::mutex pending_lock;
        std::map<std::uint64_t, std::unique_ptr<pending>> in_flight;
        std::thread reader;
        std::atomic<bool> down{false};
    };

    connection& ensure_connected(worker_id peer);
    void reader_loop(worker_id peer, connection& conn);
    static void fail_pending(connection& conn, const std::string& why);

    std::vector<roster_entry> m_roster;
    worker_id m_self;
    std::uint32_t m_feature_dim;
    int m_connect_retry_ms;
    std::mutex m_connect_lock;
    std::vector<std::unique_ptr<connection>> m_connections;
    std::atomic<std::uint64_t> m_sample_req_frames{0};
    std::atomic<bool> m_closed{false};
};

} // namespace drb
