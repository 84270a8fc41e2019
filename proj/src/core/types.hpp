#pragma once

#include <cstdint>
#include <vector>

namespace drb {

using class_id = std::uint32_t;
using worker_id = std::uint32_t;

/**
 * The unit stored, transferred and trained on: a fixed-length feature
 * vector plus its class label. features.size() equals the run's
 * feature_dim for every sample in a run.
 */
struct sample {
    std::vector<float> features;
    class_id label = 0;
};

/// Ordered list of samples; length equals the configured batch size except
/// possibly for the final batch of an epoch.
using mini_batch = std::vector<sample>;

/// One globally addressable buffer slot: (owner worker, class, slot index).
struct slot_ref {
    worker_id owner = 0;
    class_id cls = 0;
    std::uint32_t slot = 0;

    bool operator==(const slot_ref&) const = default;
};

} // namespace drb
