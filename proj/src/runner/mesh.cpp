#include "runner/mesh.hpp"

#include "core/errors.hpp"

namespace drb {

namespace {
// Barrier sequence numbers live far above any training iteration count.
constexpr std::uint64_t k_barrier_base = 1ULL << 40;
} // namespace

worker_mesh::worker_mesh(const run_config& cfg, worker_id rank,
                         std::vector<roster_entry> roster)
    : m_cfg(cfg), m_rank(rank), m_roster(std::move(roster)),
      m_barrier_seq(k_barrier_base) {
    if (m_roster.size() != cfg.n_workers)
        throw config_error("mesh: roster size does not match n_workers");
    // The client connects lazily, so it can exist before any listener is up;
    // that lets the engine hold its pointer from construction.
    if (m_cfg.n_workers > 1)
        m_client = std::make_unique<rpc_client>(m_roster, m_rank, m_cfg.feature_dim);
    m_reduce = std::make_unique<allreduce_op>(m_rank, m_cfg.n_workers, m_client.get());
}

worker_mesh::~worker_mesh() {
    stop();
}

void worker_mesh::wire_engine(engine& eng) {
    m_callbacks.on_sample = [&eng](const wire::sample_request& req, std::uint64_t id) {
        return eng.serve_sample(req, id);
    };
    m_callbacks.on_size_bcast = [&eng](const wire::size_bcast& msg) { eng.on_size_bcast(msg); };
}

void worker_mesh::wire_sample_handler(
    std::function<wire::sample_response(const wire::sample_request&, std::uint64_t)> fn,
    std::function<void(const wire::size_bcast&)> bcast_fn) {
    m_callbacks.on_sample = std::move(fn);
    m_callbacks.on_size_bcast = std::move(bcast_fn);
}

void worker_mesh::start() {
    if (m_started)
        throw usage_error("mesh: already started");
    m_started = true;
    if (m_cfg.n_workers == 1)
        return;
    m_callbacks.on_allreduce = [this](wire::allreduce_chunk&& msg, std::uint64_t,
                                      std::function<void(const wire::allreduce_chunk&)> reply) {
        m_reduce->deliver(std::move(msg), std::move(reply));
    };
    m_server = std::make_unique<rpc_server>(m_roster[m_rank].port, m_callbacks,
                                            m_cfg.feature_dim);
    m_server->start();
}

void worker_mesh::barrier() {
    if (!m_started)
        throw usage_error("mesh: barrier before start");
    const float token = 0.0f;
    m_reduce->run(m_barrier_seq++, std::span<const float>(&token, 1));
}

void worker_mesh::stop() {
    if (!m_started)
        return;
    if (m_reduce)
        m_reduce->abort("mesh stopping");
    if (m_server)
        m_server->stop();
    if (m_client)
        m_client->close_all();
    m_started = false;
}

std::uint64_t worker_mesh::protocol_errors() const {
    return m_server ? m_server->protocol_errors() : 0;
}

} // namespace drb
