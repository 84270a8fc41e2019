#pragma once

#include "core/config.hpp"

namespace drb {

/**
 * Effective rate at a given epoch within the current task: linear warmup
 * over warmup_epochs, then the base rate under the latest milestone
 * multiplier, optionally scaled by the worker count, always clamped to the
 * cap. Strictly positive.
 */
double effective_lr(const lr_schedule_config& schedule, unsigned epoch_in_task,
                    unsigned n_workers);

} // namespace drb
