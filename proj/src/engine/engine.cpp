#include "engine/engine.hpp"

#include "core/errors.hpp"

#include <chrono>

namespace drb {

namespace {

using clock = std::chrono::steady_clock;

double ms_since(clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
}

// Rendezvous budget for peers' occupancy rows and the serve gate. Generous:
// it only binds when a peer stalls or dies, and the pipeline then degrades
// to stale rows instead of failing.
constexpr std::chrono::milliseconds k_rendezvous_timeout{30000};

} // namespace

engine::engine(const run_config& cfg, worker_id self, rehearsal_buffer& buffer,
               size_table& table, rpc_client* client)
    : m_cfg(cfg), m_self(self), m_buffer(buffer), m_table(table), m_client(client),
      m_candidate_rng(cfg.rng_seed, self, rng_stream::purpose::candidate_selection),
      m_eviction_rng(cfg.rng_seed, self, rng_stream::purpose::eviction),
      m_sampling_rng(cfg.rng_seed, self, rng_stream::purpose::global_sampling),
      m_substitute_rng(cfg.rng_seed, self, rng_stream::purpose::slot_substitute),
      m_replan_rng(rng_stream::keyed(cfg.rng_seed, self, rng_stream::purpose::global_sampling,
                                     /*k1=*/0x7e, /*k2=*/0)),
      m_serve_substitute_rng(
          rng_stream::keyed(cfg.rng_seed, self, rng_stream::purpose::slot_substitute,
                            /*k1=*/0x5e, /*k2=*/0)) {
    m_last_row.worker = self;
    m_last_row.version = 0;
    m_last_row.occupancy.assign(cfg.n_classes, 0);
}

engine::~engine() {
    if (m_started.load() && !m_shut_down.load()) {
        try {
            shutdown();
        } catch (...) {
        }
    }
}

void engine::start() {
    if (m_started.exchange(true))
        throw usage_error("engine: already started");
    m_stopping.store(false);
    m_pipeline = std::thread([this] { pipeline_main(); });
}

std::size_t engine::queue_depth() const {
    std::lock_guard lock(const_cast<std::mutex&>(m_queue_lock));
    return m_queued ? 1 : 0;
}

std::vector<sample> engine::update(const mini_batch& m) {
    if (m_shut_down.load())
        throw usage_error("engine: update after shutdown");
    if (!m_started.load())
        throw usage_error("engine: update before start");
    if (m_dead.load())
        throw engine_error("engine: background pipeline dead: " + m_death_reason);

    const auto t0 = clock::now();
    std::vector<sample> reps;
    const std::uint64_t iteration = m_iteration.load();
    if (iteration > 0) {
        try {
            reps = m_pending.get();
        } catch (const std::exception& e) {
            m_dead.store(true);
            m_death_reason = e.what();
            throw engine_error("engine: background pipeline dead: " + m_death_reason);
        }
    }
    const double waited = ms_since(t0);
    m_total_wait_ms.store(m_total_wait_ms.load() + waited);
    {
        std::lock_guard lock(m_timings_lock);
        // Attribute the block to the update call's iteration index.
        m_timings.push_back(timings{});
        m_timings.back().iteration = iteration;
        m_timings.back().wait_ms = waited;
    }

    job j;
    j.batch = m;
    j.round = iteration;
    m_pending = j.promise.get_future();
    {
        std::unique_lock lock(m_queue_lock);
        m_queue_cv.wait(lock, [this] { return !m_queued || m_stopping.load(); });
        if (m_stopping.load())
            throw usage_error("engine: update during shutdown");
        m_queued.emplace(std::move(j));
    }
    m_queue_cv.notify_all();
    m_iteration.fetch_add(1);
    return reps;
}

void engine::publish_row(std::uint64_t round) {
    // Row versions count applied updates: version round+1 is the state after
    // this round's insertions; version 0 would be the empty start.
    const auto snap = m_buffer.snapshot();
    const std::uint64_t version = round + 1;
    {
        std::lock_guard lock(m_progress_lock);
        m_updates_done = version;
        m_last_row.version = version;
        m_last_row.occupancy = snap.per_class;
    }
    m_progress_cv.notify_all();
    m_table.store_row(m_self, version, snap.per_class);
    if (m_client) {
        wire::size_bcast msg;
        msg.row.worker = m_self;
        msg.row.version = version;
        msg.row.occupancy = snap.per_class;
        for (worker_id peer = 0; peer < m_cfg.n_workers; ++peer) {
            if (peer == m_self)
                continue;
            try {
                m_client->send_size_bcast(peer, msg);
            } catch (const transport_error&) {
                m_degraded_rounds.fetch_add(1);
            }
        }
    }
}

void engine::run_round(job& j) {
    timings t;
    t.iteration = j.round;
    const auto enqueue_time = clock::now();

    auto populate_start = clock::now();
    m_buffer.update_buffer(j.batch, m_cfg.candidate_count, m_candidate_rng, m_eviction_rng);
    publish_row(j.round);
    t.populate_ms = ms_since(populate_start);

    std::vector<sample> reps;
    if (!m_stopping.load()) {
        const auto augment_start = clock::now();
        std::uint32_t degraded = 0;
        const auto view = m_table.view_at(j.round + 1, k_rendezvous_timeout, &degraded);
        auto p = plan(m_cfg.rep_count, view, m_sampling_rng);
        auto fetched = fetch(p, m_client, m_buffer, m_table, m_substitute_rng, m_replan_rng,
                             k_sample_tag | (j.round & k_seq_mask), &m_stopping);
        reps = std::move(fetched.reps);
        m_replanned.fetch_add(fetched.replanned);
        t.degraded = degraded;
        if (degraded > 0)
            m_degraded_rounds.fetch_add(1);
        t.augment_ms = ms_since(augment_start);
        m_table.prune_below(j.round + 1);
    }
    t.latency_ms = ms_since(enqueue_time);
    {
        std::lock_guard lock(m_timings_lock);
        m_timings.push_back(t);
    }
    j.promise.set_value(std::move(reps));
}

void engine::pipeline_main() {
    for (;;) {
        std::optional<job> j;
        {
            std::unique_lock lock(m_queue_lock);
            m_queue_cv.wait(lock, [this] { return m_queued.has_value() || m_stopping.load(); });
            if (m_queued) {
                j.emplace(std::move(*m_queued));
                m_queued.reset();
            } else if (m_stopping.load()) {
                return;
            }
        }
        m_queue_cv.notify_all();
        if (!j)
            continue;
        try {
            run_round(*j);
        } catch (const std::exception& e) {
            m_dead.store(true);
            m_death_reason = e.what();
            try {
                j->promise.set_exception(
                    std::make_exception_ptr(engine_error(m_death_reason)));
            } catch (...) {
            }
        }
    }
}

void engine::shutdown() {
    if (!m_started.load())
        throw usage_error("engine: shutdown before start");
    if (m_shut_down.exchange(true))
        throw usage_error("engine: double shutdown");
    m_stopping.store(true);
    m_queue_cv.notify_all();
    m_progress_cv.notify_all();
    m_table.interrupt();
    if (m_pipeline.joinable())
        m_pipeline.join();
}

wire::sample_response engine::serve_sample(const wire::sample_request& req,
                                           std::uint64_t request_id) {
    if ((request_id >> 60) == 1) {
        // Pipeline fetch: serve only once our own update for that round has
        // been applied, so slot indices planned against our broadcast row are
        // valid (occupancy is monotone).
        const std::uint64_t round = request_id & k_seq_mask;
        std::unique_lock lock(m_progress_lock);
        m_progress_cv.wait_for(lock, k_rendezvous_timeout, [this, round] {
            return m_updates_done > round || m_stopping.load();
        });
    }
    wire::sample_response resp;
    {
        std::lock_guard lock(m_progress_lock);
        resp.sizes = m_last_row;
    }
    std::vector<read_entry> entries;
    {
        std::lock_guard lock(m_serve_substitute_lock);
        entries = m_buffer.read_slots(req.slots, m_serve_substitute_rng);
    }
    resp.entries.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        wire::sample_response::entry e;
        e.cls = req.slots[i].cls;
        e.flag = static_cast<std::uint8_t>(entries[i].status);
        if (entries[i].status == read_status::empty) {
            e.value.features.assign(m_cfg.feature_dim, 0.0f);
            e.value.label = 0;
        } else {
            e.value = std::move(entries[i].value);
        }
        resp.entries.push_back(std::move(e));
    }
    return resp;
}

void engine::on_size_bcast(const wire::size_bcast& msg) {
    m_table.store_row(msg.row.worker, msg.row.version, msg.row.occupancy);
}

void engine::broadcast_sizes() {
    std::uint64_t round;
    {
        std::lock_guard lock(m_progress_lock);
        if (m_updates_done == 0)
            return; // nothing stored yet
        round = m_updates_done - 1;
    }
    publish_row(round);
}

std::vector<engine::timings> engine::drain_timings() {
    std::lock_guard lock(m_timings_lock);
    auto out = std::move(m_timings);
    m_timings.clear();
    return out;
}

} // namespace drb
