#pragma once

#include "core/config.hpp"

namespace drb {

struct overlap_result {
    double train_cost_ms = 0.0;      // simulated training cost actually used
    double background_ms = 0.0;      // calibrated mean populate+augment cost
    double mean_wait_ms = 0.0;       // mean blocked time in update() per iteration
    double mean_iteration_ms = 0.0;  // mean wall time per iteration
    std::uint64_t iterations = 0;
};

/**
 * Drive the engine with a sleep-based training stub and measure how much of
 * the buffer management actually hides behind the training step. A
 * train_cost_ms < 0 asks for auto-calibration: 10x the measured background
 * round. Rank 0 writes overlap_report.txt.
 */
overlap_result run_overlap_bench(const run_config& cfg, worker_id rank, double train_cost_ms,
                                 std::uint64_t iterations);

} // namespace drb
