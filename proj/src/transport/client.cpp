#include "transport/client.hpp"

#include "core/errors.hpp"

namespace drb {

rpc_client::rpc_client(std::vector<roster_entry> roster, worker_id self,
                       std::uint32_t feature_dim, int connect_retry_ms)
    : m_roster(std::move(roster)), m_self(self), m_feature_dim(feature_dim),
      m_connect_retry_ms(connect_retry_ms) {
    m_connections.resize(m_roster.size());
}

rpc_client::~rpc_client() {
    close_all();
}

void rpc_client::close_all() {
    if (m_closed.exchange(true))
        return;
    for (auto& conn : m_connections) {
        if (!conn)
            continue;
        conn->down.store(true);
        conn->fd.shutdown_both();
    }
    for (auto& conn : m_connections) {
        if (conn && conn->reader.joinable())
            conn->reader.join();
    }
}

bool rpc_client::peer_down(worker_id peer) const {
    const auto& conn = m_connections[peer];
    return conn && conn->down.load();
}

rpc_client::connection& rpc_client::ensure_connected(worker_id peer) {
    if (peer >= m_roster.size())
        throw usage_error("rpc_client: peer " + std::to_string(peer) + " not in roster");
    std::lock_guard lock(m_connect_lock);
    auto& slot = m_connections[peer];
    if (slot && !slot->down.load())
        return *slot;
    if (slot && slot->reader.joinable())
        slot->reader.join();
    auto conn = std::make_unique<connection>();
    conn->fd = connect_to(m_roster[peer].host, m_roster[peer].port, m_connect_retry_ms);
    connection& ref = *conn;
    slot = std::move(conn);
    ref.reader = std::thread([this, peer, &ref] { reader_loop(peer, ref); });
    return ref;
}

void rpc_client::fail_pending(connection& conn, const std::string& why) {
    std::map<std::uint64_t, std::unique_ptr<pending>> in_flight;
    {
        std::lock_guard lock(conn.pending_lock);
        in_flight.swap(conn.in_flight);
    }
    for (auto& [id, p] : in_flight) {
        const auto err = std::make_exception_ptr(transport_error(why));
        if (p->k == pending::kind::sample)
            p->sample_promise.set_exception(err);
        else
            p->reduce_promise.set_exception(err);
    }
}

void rpc_client::reader_loop(worker_id peer, connection& conn) {
    std::string why = "connection to worker " + std::to_string(peer) + " closed";
    try {
        for (;;) {
            auto f = read_frame(conn.fd);
            if (!f)
                break;
            std::unique_ptr<pending> p;
            {
                std::lock_guard lock(conn.pending_lock);
                const auto it = conn.in_flight.find(f->header.request_id);
                if (it != conn.in_flight.end()) {
                    p = std::move(it->second);
                    conn.in_flight.erase(it);
                }
            }
            if (!p)
                continue; // unsolicited reply; ignore
            try {
                if (p->k == pending::kind::sample) {
                    if (f->header.type != wire::msg_type::sample_resp)
                        throw protocol_error(std::string("expected SAMPLE_RESP, got ") +
                                             wire::msg_type_name(f->header.type));
                    p->sample_promise.set_value(
                        wire::decode_sample_response(f->payload, m_feature_dim));
                } else {
                    if (f->header.type != wire::msg_type::allreduce_chunk)
                        throw protocol_error(std::string("expected ALLREDUCE_CHUNK, got ") +
                                             wire::msg_type_name(f->header.type));
                    p->reduce_promise.set_value(
                        wire::decode_allreduce_chunk(f->payload).values);
                }
            } catch (...) {
                if (p->k == pending::kind::sample)
                    p->sample_promise.set_exception(std::current_exception());
                else
                    p->reduce_promise.set_exception(std::current_exception());
            }
        }
    } catch (const std::exception& e) {
        why += std::string(": ") + e.what();
    }
    conn.down.store(true);
    fail_pending(conn, why);
}

std::future<wire::sample_response> rpc_client::send_sample_request(
    worker_id peer, const wire::sample_request& req, std::uint64_t request_id) {
    auto& conn = ensure_connected(peer);
    auto p = std::make_unique<pending>();
    p->k = pending::kind::sample;
    auto future = p->sample_promise.get_future();
    {
        std::lock_guard lock(conn.pending_lock);
        if (!conn.in_flight.emplace(request_id, std::move(p)).second)
            throw usage_error("duplicate request_id " + std::to_string(request_id));
    }
    try {
        const auto payload = wire::encode_sample_request(req);
        std::lock_guard lock(conn.write_lock);
        write_frame(conn.fd, wire::msg_type::sample_req, request_id, payload);
        m_sample_req_frames.fetch_add(1, std::memory_order_relaxed);
    } catch (...) {
        std::lock_guard lock(conn.pending_lock);
        conn.in_flight.erase(request_id);
        throw;
    }
    return future;
}

void rpc_client::send_size_bcast(worker_id peer, const wire::size_bcast& msg) {
    auto& conn = ensure_connected(peer);
    const auto payload = wire::encode_size_bcast(msg);
    std::lock_guard lock(conn.write_lock);
    write_frame(conn.fd, wire::msg_type::size_bcast, 0, payload);
}

std::future<std::vector<float>> rpc_client::send_allreduce(worker_id peer,
                                                           const wire::allreduce_chunk& msg,
                                                           std::uint64_t request_id) {
    auto& conn = ensure_connected(peer);
    auto p = std::make_unique<pending>();
    p->k = pending::kind::reduce;
    auto future = p->reduce_promise.get_future();
    {
        std::lock_guard lock(conn.pending_lock);
        if (!conn.in_flight.emplace(request_id, std::move(p)).second)
            throw usage_error("duplicate request_id " + std::to_string(request_id));
    }
    try {
        const auto payload = wire::encode_allreduce_chunk(msg);
        std::lock_guard lock(conn.write_lock);
        write_frame(conn.fd, wire::msg_type::allreduce_chunk, request_id, payload);
    } catch (...) {
        std::lock_guard lock(conn.pending_lock);
        conn.in_flight.erase(request_id);
        throw;
    }
    return future;
}

void rpc_client::send_shutdown(worker_id peer) {
    try {
        auto& conn = ensure_connected(peer);
        std::lock_guard lock(conn.write_lock);
        write_frame(conn.fd, wire::msg_type::shutdown, 0, {});
    } catch (const std::exception&) {
        // peer already gone; shutdown is best effort
    }
}

} // namespace drb
