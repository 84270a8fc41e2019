#include "runner/bias.hpp"

#include "core/capacity.hpp"
#include "core/errors.hpp"
#include "runner/mesh.hpp"
#include "runner/worker.hpp"
#include "sampler/sampler.hpp"

#include <chrono>
#include <thread>
#include <unordered_map>

namespace drb {

namespace {

mini_batch make_fill_batch(const run_config& cfg, worker_id rank, std::size_t count) {
    rng_stream rng = rng_stream::keyed(cfg.rng_seed, rank, rng_stream::purpose::synth,
                                       /*k1=*/0xf111, /*k2=*/0);
    mini_batch batch;
    batch.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        sample s;
        s.label = static_cast<class_id>(i % cfg.n_classes);
        s.features.resize(cfg.feature_dim);
        for (auto& f : s.features)
            f = static_cast<float>(rng.gaussian());
        batch.push_back(std::move(s));
    }
    return batch;
}

} // namespace

bias_report run_bias_test(const run_config& cfg, worker_id rank, std::uint64_t draws,
                          std::uint64_t fill, bool local_only) {
    validate(cfg);
    if (fill < cfg.n_workers)
        throw config_error("bias test: fill must provide at least one sample per worker");

    const std::size_t fill_here = fill / cfg.n_workers + (rank < fill % cfg.n_workers ? 1 : 0);
    const std::size_t class_cap = (fill_here + cfg.n_classes - 1) / cfg.n_classes;

    rehearsal_buffer buffer(cfg.n_classes, std::max<std::size_t>(1, class_cap));
    size_table table(cfg.n_workers, cfg.n_classes, rank);
    worker_mesh mesh(cfg, rank, resolve_roster(cfg));
    struct mesh_guard {
        worker_mesh& m;
        ~mesh_guard() { m.stop(); }
    } guard{mesh};

    rng_stream substitute_rng(cfg.rng_seed, rank, rng_stream::purpose::slot_substitute);
    std::mutex serve_lock;
    mesh.wire_sample_handler(
        [&](const wire::sample_request& req, std::uint64_t) {
            wire::sample_response resp;
            const auto snap = buffer.snapshot();
            resp.sizes.worker = rank;
            resp.sizes.version = 1;
            resp.sizes.occupancy = snap.per_class;
            std::lock_guard lock(serve_lock);
            auto entries = buffer.read_slots(req.slots, substitute_rng);
            for (std::size_t i = 0; i < entries.size(); ++i) {
                wire::sample_response::entry e;
                e.cls = req.slots[i].cls;
                e.flag = static_cast<std::uint8_t>(entries[i].status);
                if (entries[i].status == read_status::empty) {
                    e.value.features.assign(cfg.feature_dim, 0.0f);
                } else {
                    e.value = std::move(entries[i].value);
                }
                resp.entries.push_back(std::move(e));
            }
            return resp;
        },
        [&](const wire::size_bcast& msg) {
            table.store_row(msg.row.worker, msg.row.version, msg.row.occupancy);
        });
    mesh.start();
    mesh.barrier();

    // Freeze phase: every candidate of the fill batch is inserted (no
    // evictions, capacity covers the fill).
    rng_stream cand_rng(cfg.rng_seed, rank, rng_stream::purpose::candidate_selection);
    rng_stream evict_rng(cfg.rng_seed, rank, rng_stream::purpose::eviction);
    const auto batch = make_fill_batch(cfg, rank, fill_here);
    buffer.update_buffer(batch, batch.size(), cand_rng, evict_rng);
    const auto snap = buffer.snapshot();
    table.store_row(rank, 1, snap.per_class);
    if (mesh.client()) {
        wire::size_bcast msg;
        msg.row.worker = rank;
        msg.row.version = 1;
        msg.row.occupancy = snap.per_class;
        for (worker_id peer = 0; peer < cfg.n_workers; ++peer)
            if (peer != rank)
                mesh.client()->send_size_bcast(peer, msg);
    }
    mesh.barrier();

    bias_report report;
    if (rank == 0) {
        // Rows travel asynchronously; wait for the full frozen picture.
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
        while (table.latest_view().total != fill) {
            if (std::chrono::steady_clock::now() > deadline)
                throw transport_error("bias test: size rows incomplete after fill");
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        const auto view = table.latest_view();

        // Stable flat index per (owner, class, slot) for counting.
        std::vector<std::uint64_t> counts(view.total, 0);
        std::vector<std::vector<std::uint64_t>> base(cfg.n_workers,
                                                     std::vector<std::uint64_t>(cfg.n_classes));
        std::uint64_t cursor = 0;
        for (worker_id w = 0; w < cfg.n_workers; ++w)
            for (class_id c = 0; c < cfg.n_classes; ++c) {
                base[w][c] = cursor;
                cursor += view.occupancy[w][c];
            }

        rng_stream plan_rng(cfg.rng_seed, 0, rng_stream::purpose::global_sampling);
        rng_stream fetch_sub_rng = rng_stream::keyed(cfg.rng_seed, 0,
                                                     rng_stream::purpose::slot_substitute,
                                                     /*k1=*/0xb1a5, /*k2=*/0);
        rng_stream replan_rng = rng_stream::keyed(cfg.rng_seed, 0,
                                                  rng_stream::purpose::global_sampling,
                                                  /*k1=*/0xb1a5, /*k2=*/0);
        constexpr std::uint64_t k_probe_tag = 3ULL << 60;
        std::uint64_t probe_id = 0;
        for (std::uint64_t d = 0; d < draws; ++d) {
            const auto p = local_only
                               ? plan_local_only(cfg.rep_count, view, /*self=*/0, plan_rng)
                               : plan(cfg.rep_count, view, plan_rng);
            for (const auto& ref : p.entries)
                ++counts[base[ref.owner][ref.cls] + ref.slot];
            if (d % 1009 == 0 && !local_only) {
                // Periodic end-to-end probe: the plan must materialize too.
                auto fetched = fetch(p, mesh.client(), buffer, table, fetch_sub_rng,
                                     replan_rng, k_probe_tag | probe_id++);
                if (fetched.reps.size() != p.entries.size())
                    throw transport_error("bias test: fetch returned " +
                                          std::to_string(fetched.reps.size()) + " of " +
                                          std::to_string(p.entries.size()) + " samples");
            }
        }
        report = make_bias_report(counts, cfg.rep_count, draws);
        write_bias_report(report, cfg.results_dir + "/bias_report.txt");
    }
    mesh.barrier();
    mesh.stop();
    return report;
}

} // namespace drb
