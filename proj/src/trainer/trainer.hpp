#pragma once

#include "core/config.hpp"
#include "engine/engine.hpp"
#include "metrics/metrics.hpp"
#include "scenario/dataset.hpp"
#include "scenario/schedule.hpp"
#include "trainer/model.hpp"
#include "transport/allreduce.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace drb {

struct sgd_state {
    double momentum = 0.0;
    std::vector<float> velocity;
};

/**
 * One data-parallel step: local gradients on the (augmented) batch, mean
 * across workers via the collective, SGD update. All replicas apply the same
 * averaged gradient, so parameters stay bitwise identical. Returns the local
 * loss; throws training_error on non-finite loss or gradient.
 */
double train_step(mlp_model& model, const mini_batch& batch, double lr, allreduce_op& reduce,
                  std::uint64_t seq, sgd_state& sgd);

/// Top-k accuracy on `eval_set`; ties broken toward the lowest class index.
double evaluate(const mlp_model& model, const mini_batch& eval_set, unsigned k);

/// Everything a scenario run needs besides the trainer's own state. engine
/// is null for the non-rehearsal baselines; client is null at N == 1.
struct scenario_context {
    const dataset* data = nullptr;
    engine* rehearsal_engine = nullptr;
    allreduce_op* reduce = nullptr;
    worker_id rank = 0;
    /// Called after every optimizer step with the iteration and checksum.
    std::function<void(std::uint64_t, std::uint64_t)> on_step;
    /// Called at each task boundary (e.g. re-broadcast buffer sizes).
    std::function<void(unsigned)> on_task_end;
};

struct scenario_result {
    accuracy_matrix matrix;
    std::vector<breakdown_record> breakdown;
    double total_train_seconds = 0.0;
    double total_wait_seconds = 0.0;
    std::uint64_t epochs_trained = 0;
    std::uint64_t iterations = 0;
};

/**
 * Drive the class-incremental scenario in the configured mode:
 *   incremental  - train each task's own data only;
 *   from_scratch - reinitialize at every task and train on tasks 1..t;
 *   rehearsal    - train each task with update()-augmented batches.
 * After each task the model is evaluated on every task seen so far.
 */
scenario_result run_scenario(const run_config& cfg, const task_schedule& schedule,
                             run_mode mode, mlp_model& model, scenario_context& ctx);

} // namespace drb
