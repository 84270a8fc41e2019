#pragma once

#include "transport/socket.hpp"
#include "transport/wire.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace drb {

/**
 * Handlers the serving worker plugs into the listener. on_sample runs on the
 * connection's thread and may block (e.g. on a pipeline progress gate);
 * on_allreduce must not block: it either replies through the provided
 * function immediately or stores it for a deferred reply.
 */
struct server_callbacks {
    std::function<wire::sample_response(const wire::sample_request&, std::uint64_t request_id)>
        on_sample;
    std::function<void(const wire::size_bcast&)> on_size_bcast;
    std::function<void(wire::allreduce_chunk&&, std::uint64_t request_id,
                       std::function<void(const wire::allreduce_chunk&)> reply)>
        on_allreduce;
};

/**
 * Listener half of the RPC layer: accepts peer connections and serves
 * requests concurrently with local training. One bad peer never stops the
 * listener; a SHUTDOWN frame (or request_stop) drains in-flight replies and
 * exits.
 */
class rpc_server {
public:
    rpc_server(std::uint16_t port, server_callbacks callbacks, std::uint32_t feature_dim,
               std::size_t max_connections = 128);
    ~rpc_server();

    rpc_server(const rpc_server&) = delete;
    rpc_server& operator=(const rpc_server&) = delete;

    /// Bind + spawn the accept loop. Throws transport_error on bind failure.
    void start();

    /// Stop accepting, unblock handlers, join every connection thread.
    void stop();

    /// True once a SHUTDOWN frame stopped the listener.
    bool shutdown_received() const { return m_shutdown_frame.load(); }

    std::uint16_t port() const { return m_port; }

    std::uint64_t protocol_errors() const { return m_protocol_errors.load(); }

private:
    struct conn_slot {
        socket_fd fd;
        std::mutex write_lock;
        std::thread thread;
    };

    void accept_loop();
    void serve_connection(std::shared_ptr<conn_slot> slot);

    std::uint16_t m_port;
    server_callbacks m_callbacks;
    std::uint32_t m_feature_dim;
    std::size_t m_max_connections;
    socket_fd m_listener;
    std::thread m_accept_thread;
    std::mutex m_conn_lock;
    std::vector<std::shared_ptr<conn_slot>> m_connections;
    std::atomic<bool> m_started{false};
    std::atomic<bool> m_stopping{false};
    std::atomic<bool> m_shutdown_frame{false};
    std::atomic<std::uint64_t> m_protocol_errors{0};
};

} // namespace drb
