#include "runner/overlap.hpp"

#include "core/capacity.hpp"
#include "core/errors.hpp"
#include "engine/engine.hpp"
#include "runner/mesh.hpp"
#include "runner/worker.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <thread>

namespace drb {

namespace {

using clock = std::chrono::steady_clock;

std::vector<mini_batch> make_stream(const run_config& cfg, worker_id rank, std::size_t n) {
    rng_stream rng = rng_stream::keyed(cfg.rng_seed, rank, rng_stream::purpose::synth,
                                       /*k1=*/0x0b, /*k2=*/0);
    std::vector<mini_batch> batches(n);
    for (auto& batch : batches) {
        batch.resize(cfg.batch_size);
        std::size_t i = 0;
        for (auto& s : batch) {
            s.label = static_cast<class_id>(i++ % cfg.n_classes);
            s.features.resize(cfg.feature_dim);
            for (auto& f : s.features)
                f = static_cast<float>(rng.gaussian());
        }
    }
    return batches;
}

} // namespace

overlap_result run_overlap_bench(const run_config& cfg, worker_id rank, double train_cost_ms,
                                 std::uint64_t iterations) {
    validate(cfg);
    if (iterations == 0)
        throw config_error("overlap bench: need at least one iteration");

    const std::size_t class_cap = 64;
    rehearsal_buffer buffer(cfg.n_classes, class_cap);
    size_table table(cfg.n_workers, cfg.n_classes, rank);
    worker_mesh mesh(cfg, rank, resolve_roster(cfg));
    engine eng(cfg, rank, buffer, table, mesh.client());
    struct mesh_guard {
        worker_mesh& m;
        ~mesh_guard() { m.stop(); }
    } guard{mesh};
    mesh.wire_engine(eng);
    mesh.start();
    mesh.barrier();
    eng.start();

    const auto stream = make_stream(cfg, rank, 64);
    std::size_t next_batch = 0;
    auto feed = [&]() -> const mini_batch& { return stream[next_batch++ % stream.size()]; };

    // Calibration: drive the pipeline flat out and take the mean background
    // round cost (populate + augment).
    const std::size_t warmup = 60;
    for (std::size_t i = 0; i < warmup; ++i)
        eng.update(feed());
    double background_ms = 0.0;
    std::size_t background_rounds = 0;
    for (const auto& t : eng.drain_timings()) {
        if (t.populate_ms + t.augment_ms > 0.0) {
            background_ms += t.populate_ms + t.augment_ms;
            ++background_rounds;
        }
    }
    if (background_rounds > 0)
        background_ms /= static_cast<double>(background_rounds);

    double cost = train_cost_ms;
    if (cost < 0.0)
        cost = 10.0 * std::max(background_ms, 0.1);

    const double wait_before = eng.total_wait_ms();
    const auto bench_start = clock::now();
    for (std::uint64_t i = 0; i < iterations; ++i) {
        eng.update(feed());
        if (cost > 0.0)
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cost));
    }
    const double bench_ms =
        std::chrono::duration<double, std::milli>(clock::now() - bench_start).count();

    overlap_result result;
    result.train_cost_ms = cost;
    result.background_ms = background_ms;
    result.mean_wait_ms = (eng.total_wait_ms() - wait_before) / static_cast<double>(iterations);
    result.mean_iteration_ms = bench_ms / static_cast<double>(iterations);
    result.iterations = iterations;

    eng.shutdown();
    mesh.barrier();
    mesh.stop();

    if (rank == 0) {
        std::ofstream out(cfg.results_dir + "/overlap_report.txt", std::ios::trunc);
        if (!out)
            throw io_error("cannot write overlap report");
        out << std::fixed << std::setprecision(6);
        out << "iterations=" << result.iterations << "\n";
        out << "train_cost_ms=" << result.train_cost_ms << "\n";
        out << "background_ms=" << result.background_ms << "\n";
        out << "mean_wait_ms=" << result.mean_wait_ms << "\n";
        out << "mean_iteration_ms=" << result.mean_iteration_ms << "\n";
        out << "wait_fraction="
            << (result.mean_iteration_ms > 0.0 ? result.mean_wait_ms / result.mean_iteration_ms
                                               : 0.0)
            << "\n";
    }
    return result;
}

} // namespace drb
