#pragma once

#include "core/config.hpp"
#include "metrics/metrics.hpp"

namespace drb {

/**
 * Freeze `fill` samples across the workers' buffers, then have rank 0 draw
 * `draws` sampling plans and chi-square the per-slot selection counts
 * against the uniform expectation. local_only switches to the deliberately
 * biased own-buffer-only planner (negative control). Rank 0 writes
 * bias_report.txt into results_dir and returns the report; other ranks
 * serve and return a default report.
 */
bias_report run_bias_test(const run_config& cfg, worker_id rank, std::uint64_t draws,
                          std::uint64_t fill, bool local_only);

} // namespace drb
