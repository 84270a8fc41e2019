#include "transport/server.hpp"

#include "core/errors.hpp"

#include <iostream>

namespace drb {

rpc_server::rpc_server(std::uint16_t port, server_callbacks callbacks,
                       std::uint32_t feature_dim, std::size_t max_connections)
    : m_port(port), m_callbacks(std::move(callbacks)), m_feature_dim(feature_dim),
      m_max_connections(max_connections) {}

rpc_server::~rpc_server() {
    stop();
}

void rpc_server::start() {
    if (m_started.exchange(true))
        throw usage_error("rpc_server: already started");
    m_listener = listen_on(m_port);
    m_accept_thread = std::thread([this] { accept_loop(); });
}

void rpc_server::stop() {
    if (!m_started.load() || m_stopping.exchange(true))
        return;
    m_listener.shutdown_both();
    m_listener.close();
    if (m_accept_thread.joinable())
        m_accept_thread.join();
    std::vector<std::shared_ptr<conn_slot>> connections;
    {
        std::lock_guard lock(m_conn_lock);
        connections = m_connections;
    }
    for (auto& c : connections)
        c->fd.shutdown_both();
    for (auto& c : connections)
        if (c->thread.joinable())
            c->thread.join();
}

void rpc_server::accept_loop() {
    for (;;) {
        auto fd = accept_from(m_listener);
        if (!fd)
            return; // listener closed
        std::lock_guard lock(m_conn_lock);
        if (m_connections.size() >= m_max_connections) {
            continue; // drop: fd closes on scope exit
        }
        auto slot = std::make_shared<conn_slot>();
        slot->fd = std::move(*fd);
        m_connections.push_back(slot);
        slot->thread = std::thread([this, slot] { serve_connection(slot); });
    }
}

void rpc_server::serve_connection(std::shared_ptr<conn_slot> slot) {
    // Per-connection replies can come from this thread (sample responses) or
    // from another thread later (deferred all-reduce replies), so writes go
    // through a lock owned by the connection slot.
    try {
        for (;;) {
            auto frame = read_frame(slot->fd);
            if (!frame)
                return; // peer closed
            switch (frame->header.type) {
            case wire::msg_type::sample_req: {
                const auto req = wire::decode_sample_request(frame->payload);
                wire::sample_response resp = m_callbacks.on_sample
                                                 ? m_callbacks.on_sample(req, frame->header.request_id)
                                                 : wire::sample_response{};
                const auto payload = wire::encode_sample_response(resp, m_feature_dim);
                std::lock_guard lock(slot->write_lock);
                write_frame(slot->fd, wire::msg_type::sample_resp, frame->header.request_id,
                            payload);
                break;
            }
            case wire::msg_type::size_bcast: {
                const auto msg = wire::decode_size_bcast(frame->payload);
                if (m_callbacks.on_size_bcast)
                    m_callbacks.on_size_bcast(msg);
                break;
            }
            case wire::msg_type::allreduce_chunk: {
                auto msg = wire::decode_allreduce_chunk(frame->payload);
                if (!m_callbacks.on_allreduce)
                    throw protocol_error("ALLREDUCE_CHUNK sent to a worker without a collective");
                const std::uint64_t request_id = frame->header.request_id;
                auto reply = [slot, request_id](const wire::allreduce_chunk& out) {
                    const auto payload = wire::encode_allreduce_chunk(out);
                    std::lock_guard lock(slot->write_lock);
                    write_frame(slot->fd, wire::msg_type::allreduce_chunk, request_id, payload);
                };
                m_callbacks.on_allreduce(std::move(msg), request_id, std::move(reply));
                break;
            }
            case wire::msg_type::sample_resp:
                throw protocol_error("unexpected SAMPLE_RESP on server side");
            case wire::msg_type::shutdown:
                // Drain: this connection handled everything it read; wake the
                // accept loop without tearing down other in-flight handlers.
                m_shutdown_frame.store(true);
                m_listener.shutdown_both();
                return;
            }
        }
    } catch (const protocol_error& e) {
        m_protocol_errors.fetch_add(1);
        std::cerr << "[drb] protocol error on inbound connection: " << e.what() << "\n";
    } catch (const transport_error&) {
        // connection dropped; the listener keeps serving the others
    } catch (const std::exception& e) {
        std::cerr << "[drb] connection handler error: " << e.what() << "\n";
    }
}

} // namespace drb
