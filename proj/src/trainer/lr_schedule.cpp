#include "trainer/lr_schedule.hpp"

#include <algorithm>

namespace drb {

double effective_lr(const lr_schedule_config& schedule, unsigned epoch_in_task,
                    unsigned n_workers) {
    double rate = schedule.base_rate;
    if (schedule.scale_with_workers)
        rate *= static_cast<double>(std::max(1u, n_workers));

    double multiplier = 1.0;
    for (const auto& [epoch, m] : schedule.milestones)
        if (epoch_in_task >= epoch)
            multiplier = m; // milestones are sorted; the latest one wins
    rate *= multiplier;

    if (schedule.warmup_epochs > 0 && epoch_in_task < schedule.warmup_epochs)
        rate *= static_cast<double>(epoch_in_task + 1) /
                static_cast<double>(schedule.warmup_epochs);

    return std::min(rate, schedule.cap);
}

} // namespace drb
