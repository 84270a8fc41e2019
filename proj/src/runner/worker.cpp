#include "runner/worker.hpp"

#include "core/capacity.hpp"
#include "core/errors.hpp"
#include "engine/engine.hpp"
#include "metrics/metrics.hpp"
#include "runner/mesh.hpp"
#include "scenario/dataset.hpp"
#include "scenario/schedule.hpp"
#include "trainer/trainer.hpp"

#include <fstream>
#include <iostream>

namespace drb {

std::vector<roster_entry> resolve_roster(const run_config& cfg) {
    if (!cfg.roster_path.empty()) {
        auto roster = load_roster_file(cfg.roster_path);
        if (roster.size() != cfg.n_workers)
            throw config_error("roster has " + std::to_string(roster.size()) +
                               " entries but n_workers=" + std::to_string(cfg.n_workers));
        return roster;
    }
    if (cfg.n_workers != 1)
        throw config_error("multi-worker run needs a roster file");
    return {{0, "127.0.0.1", 0}};
}

worker_stats run_worker(const run_config& cfg, worker_id rank) {
    validate(cfg);
    if (rank >= cfg.n_workers)
        throw config_error("rank " + std::to_string(rank) + " out of range (N=" +
                           std::to_string(cfg.n_workers) + ")");
    if (cfg.dataset_path.empty())
        throw config_error("run needs a dataset (gen-dataset can create one)");

    const dataset data = load_dataset(cfg.dataset_path);
    if (data.feature_dim != cfg.feature_dim)
        throw config_error("dataset feature_dim " + std::to_string(data.feature_dim) +
                           " does not match config " + std::to_string(cfg.feature_dim));
    if (data.n_classes != cfg.n_classes)
        throw config_error("dataset class count " + std::to_string(data.n_classes) +
                           " does not match config " + std::to_string(cfg.n_classes));

    const std::size_t s_max = cfg.resolve_capacity(data.train_count);
    const std::size_t class_cap = per_class_capacity(s_max, cfg.n_classes);

    rehearsal_buffer buffer(cfg.n_classes, class_cap);
    size_table table(cfg.n_workers, cfg.n_classes, rank);
    worker_mesh mesh(cfg, rank, resolve_roster(cfg));
    engine rehearsal_engine(cfg, rank, buffer, table, mesh.client());
    // Unwind order matters: the listener must stop calling into the engine
    // before the engine is torn down.
    struct mesh_guard {
        worker_mesh& m;
        ~mesh_guard() { m.stop(); }
    } guard{mesh};
    mesh.wire_engine(rehearsal_engine);
    mesh.start();
    mesh.barrier(); // everyone is listening before anyone trains

    mlp_model model(cfg.feature_dim, cfg.hidden_dim, cfg.n_classes);
    const auto schedule =
        make_schedule(cfg.n_classes, cfg.n_tasks, cfg.rng_seed, cfg.epochs_per_task);

    std::ofstream checksums(cfg.results_dir + "/checksums_rank_" + std::to_string(rank) +
                            ".csv");
    checksums << "iteration,checksum\n";

    scenario_context ctx;
    ctx.data = &data;
    ctx.reduce = &mesh.reduce();
    ctx.rank = rank;
    if (cfg.mode == run_mode::rehearsal) {
        rehearsal_engine.start();
        ctx.rehearsal_engine = &rehearsal_engine;
        ctx.on_task_end = [&](unsigned) { rehearsal_engine.broadcast_sizes(); };
    }
    ctx.on_step = [&](std::uint64_t iteration, std::uint64_t checksum) {
        checksums << iteration << "," << checksum << "\n";
    };

    auto result = run_scenario(cfg, schedule, cfg.mode, model, ctx);

    if (cfg.mode == run_mode::rehearsal)
        rehearsal_engine.shutdown();
    mesh.barrier(); // nobody tears down the mesh while peers still fetch
    mesh.stop();

    worker_stats stats;
    stats.accuracy_top1 = result.matrix.accuracy_T(cfg.n_tasks);
    stats.accuracy_topk = result.matrix.accuracy_T_topk(cfg.n_tasks);
    stats.total_train_seconds = result.total_train_seconds;
    stats.total_wait_seconds = result.total_wait_seconds;
    stats.epochs_trained = result.epochs_trained;
    stats.iterations = result.iterations;
    stats.invariant_violations =
        buffer.cross_class_evictions() + mesh.protocol_errors();

    write_breakdown_csv(result.breakdown, cfg.results_dir + "/breakdown_rank_" +
                                              std::to_string(rank) + ".csv");
    if (rank == 0) {
        write_accuracy_csv(result.matrix, cfg.results_dir + "/accuracy.csv");
        run_summary summary;
        summary.config = cfg;
        summary.mode = cfg.mode;
        summary.accuracy_top1 = stats.accuracy_top1;
        summary.accuracy_topk = stats.accuracy_topk;
        summary.total_train_seconds = stats.total_train_seconds;
        summary.total_wait_seconds = stats.total_wait_seconds;
        summary.epochs_trained = stats.epochs_trained;
        summary.iterations = stats.iterations;
        summary.invariant_violations = stats.invariant_violations;
        write_summary(summary, cfg.results_dir + "/summary.txt");
    }
    if (cfg.verbose)
        std::cerr << "[drb " << rank << "] accuracy_T=" << stats.accuracy_top1
                  << " train_s=" << stats.total_train_seconds
                  << " wait_s=" << stats.total_wait_seconds << "\n";
    return stats;
}

} // namespace drb
