#pragma once

#include "core/config.hpp"
#include "engine/engine.hpp"
#include "transport/allreduce.hpp"
#include "transport/client.hpp"
#include "transport/server.hpp"

#include <memory>

namespace drb {

/**
 * The per-process transport bundle: listener, peer client, and the gradient
 * collective, wired together from the roster. Single-worker runs skip the
 * network entirely (the collective degenerates to the identity).
 */
class worker_mesh {
public:
    worker_mesh(const run_config& cfg, worker_id rank, std::vector<roster_entry> roster);
    ~worker_mesh();

    /// Route inbound sample reads and size broadcasts to the engine.
    void wire_engine(engine& eng);

    /// Custom inbound sample handler (tools that serve without an engine).
    void wire_sample_handler(
        std::function<wire::sample_response(const wire::sample_request&, std::uint64_t)> fn,
        std::function<void(const wire::size_bcast&)> bcast_fn);

    void start();
    void stop();

    /// Rendezvous of all workers (collective over a reserved sequence range).
    void barrier();

    rpc_client* client() { return m_client.get(); }
    allreduce_op& reduce() { return *m_reduce; }
    std::uint64_t protocol_errors() const;

private:
    run_config m_cfg;
    worker_id m_rank;
    std::vector<roster_entry> m_roster;
    server_callbacks m_callbacks;
    std::unique_ptr<rpc_client> m_client;
    std::unique_ptr<rpc_server> m_server;
    std::unique_ptr<allreduce_op> m_reduce;
    std::uint64_t m_barrier_seq;
    bool m_started = false;
};

} // namespace drb
