#include "trainer/trainer.hpp"

#include "core/errors.hpp"
#include "trainer/lr_schedule.hpp"

#include <chrono>
#include <cmath>

namespace drb {

namespace {
using clock = std::chrono::steady_clock;

double ms_since(clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
}
} // namespace

double train_step(mlp_model& model, const mini_batch& batch, double lr, allreduce_op& reduce,
                  std::uint64_t seq, sgd_state& sgd) {
    std::vector<float> grad;
    const double loss = model.loss_and_gradient(batch, grad);
    if (!std::isfinite(loss))
        throw training_error("non-finite loss at iteration " + std::to_string(seq));

    const std::vector<float> mean = reduce.run(seq, grad);

    auto& params = model.params();
    const float rate = static_cast<float>(lr);
    if (sgd.momentum > 0.0) {
        if (sgd.velocity.size() != params.size())
            sgd.velocity.assign(params.size(), 0.0f);
        const float mu = static_cast<float>(sgd.momentum);
        for (std::size_t i = 0; i < params.size(); ++i) {
            sgd.velocity[i] = mu * sgd.velocity[i] + mean[i];
            params[i] -= rate * sgd.velocity[i];
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= rate * mean[i];
    }
    for (const float p : params)
        if (!std::isfinite(p))
            throw training_error("non-finite parameter after iteration " + std::to_string(seq));
    return loss;
}

double evaluate(const mlp_model& model, const mini_batch& eval_set, unsigned k) {
    if (eval_set.empty())
        return 0.0;
    if (k < 1 || k > model.n_classes())
        throw usage_error("evaluate: k must be in [1, K]");
    std::vector<float> logits(model.n_classes());
    std::size_t correct = 0;
    for (const auto& s : eval_set) {
        model.logits(s, logits);
        // Rank of the true label with ties broken toward lower class ids.
        std::size_t better = 0;
        const float own = logits[s.label];
        for (std::uint32_t c = 0; c < model.n_classes(); ++c) {
            if (logits[c] > own || (logits[c] == own && c < s.label))
                ++better;
        }
        if (better < k)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

namespace {

/// Evaluate row i of the accuracy matrix on per-task eval subsets.
void evaluate_row(const run_config& cfg, const task_schedule& schedule, unsigned task_i,
                  const mlp_model& model, const dataset& data, accuracy_matrix& matrix) {
    const unsigned topk = std::min(cfg.effective_topk(), cfg.n_classes);
    for (unsigned j = 1; j <= task_i; ++j) {
        const auto indices = data.eval_indices_of(schedule.tasks[j - 1]);
        const auto eval_set = data.gather(indices);
        const double a_top1 = evaluate(model, eval_set, 1);
        const double a_topk = evaluate(model, eval_set, topk);
        matrix.set(task_i, j, a_top1, a_topk);
    }
}

struct epoch_driver {
    const run_config& cfg;
    scenario_context& ctx;
    mlp_model& model;
    sgd_state& sgd;
    std::uint64_t& seq;
    std::vector<breakdown_record>& breakdown;

    /// Train one epoch over `task_data` in lockstep across workers.
    void run(const std::vector<std::size_t>& task_data, std::uint64_t task_index,
             std::uint64_t epoch, double lr, bool rehearse) {
        const auto batches = shard_batches(task_data, ctx.rank, cfg.n_workers, cfg.batch_size,
                                           cfg.rng_seed, task_index, epoch);
        const std::size_t steps = lockstep_batches(task_data.size(), cfg.n_workers,
                                                   cfg.batch_size);
        for (std::size_t b = 0; b < steps; ++b) {
            breakdown_record rec;
            rec.iteration = seq;
            rec.worker = ctx.rank;

            const auto load_start = clock::now();
            const mini_batch m = ctx.data->gather(batches[b]);
            rec.load_ms = ms_since(load_start);

            mini_batch m_train = m;
            if (rehearse) {
                auto reps = ctx.rehearsal_engine->update(m);
                m_train = augment(m, reps);
            }

            const auto train_start = clock::now();
            train_step(model, m_train, lr, *ctx.reduce, seq, sgd);
            rec.train_ms = ms_since(train_start);

            breakdown.push_back(rec);
            if (ctx.on_step)
                ctx.on_step(seq, model.param_checksum());
            ++seq;
        }
    }
};

} // namespace

scenario_result run_scenario(const run_config& cfg, const task_schedule& schedule,
                             run_mode mode, mlp_model& model, scenario_context& ctx) {
    if (ctx.data == nullptr || ctx.reduce == nullptr)
        throw usage_error("run_scenario: context missing dataset or collective");
    if (mode == run_mode::rehearsal && ctx.rehearsal_engine == nullptr)
        throw usage_error("run_scenario: rehearsal mode needs an engine");

    const unsigned n_tasks = static_cast<unsigned>(schedule.tasks.size());
    scenario_result result{accuracy_matrix(n_tasks), {}, 0.0, 0.0, 0, 0};
    sgd_state sgd;
    sgd.momentum = cfg.lr.momentum;
    std::uint64_t seq = 1; // collective sequence; 0 is the startup barrier
    rng_stream init_rng(cfg.rng_seed, 0, rng_stream::purpose::model_init);
    model.init(init_rng);

    std::vector<std::size_t> accumulated; // from-scratch: union of tasks 1..t
    for (unsigned task_i = 1; task_i <= n_tasks; ++task_i) {
        const auto& classes = schedule.tasks[task_i - 1];
        const auto task_data = ctx.data->train_indices_of(classes);

        std::vector<std::size_t> train_set;
        switch (mode) {
        case run_mode::incremental:
        case run_mode::rehearsal:
            train_set = task_data;
            break;
        case run_mode::from_scratch:
            accumulated.insert(accumulated.end(), task_data.begin(), task_data.end());
            train_set = accumulated;
            model.init(init_rng); // fresh model, same draws on every worker
            break;
        }

        const auto task_start = clock::now();
        epoch_driver driver{cfg, ctx, model, sgd, seq, result.breakdown};
        for (unsigned epoch = 0; epoch < schedule.epochs_per_task; ++epoch) {
            const double lr = effective_lr(cfg.lr, epoch, cfg.n_workers);
            driver.run(train_set, task_i - 1, epoch, lr, mode == run_mode::rehearsal);
            // Bookkeeping in task-epoch units: a from-scratch epoch at task t
            // covers t tasks' data.
            result.epochs_trained += mode == run_mode::from_scratch ? task_i : 1;
        }
        result.total_train_seconds += ms_since(task_start) / 1000.0;

        evaluate_row(cfg, schedule, task_i, model, *ctx.data, result.matrix);
        if (ctx.on_task_end)
            ctx.on_task_end(task_i);
    }
    result.iterations = seq - 1;

    // Fold the engine-side timings into the breakdown rows. Wait entries are
    // keyed by the update call's iteration, populate/augment by the round;
    // both map onto the same per-iteration rows here because rehearsal calls
    // update() exactly once per step, in order.
    if (ctx.rehearsal_engine != nullptr) {
        auto timings = ctx.rehearsal_engine->drain_timings();
        for (const auto& t : timings) {
            if (t.iteration >= result.breakdown.size())
                continue;
            auto& rec = result.breakdown[t.iteration];
            rec.populate_ms += t.populate_ms;
            rec.augment_ms += t.augment_ms;
            rec.wait_ms += t.wait_ms;
        }
        result.total_wait_seconds = ctx.rehearsal_engine->total_wait_ms() / 1000.0;
    }
    return result;
}

} // namespace drb
