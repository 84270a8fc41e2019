#include "core/capacity.hpp"

#include "core/errors.hpp"

#include <cmath>
#include <string>

namespace drb {

std::size_t per_class_capacity(std::size_t s_max, std::size_t n_classes) {
    if (n_classes == 0)
        throw config_error("per_class_capacity: class count must be >= 1");
    if (s_max < n_classes)
        throw config_error("per_class_capacity: capacity " + std::to_string(s_max) +
                           " provides no slot for some of the " + std::to_string(n_classes) +
                           " classes (at least one slot per class required)");
    return s_max / n_classes;
}

std::size_t aggregate_class_capacity(std::size_t n_workers, std::size_t s_max,
                                     std::size_t n_classes) {
    return n_workers * per_class_capacity(s_max, n_classes);
}

std::uint64_t estimate_buffer_bytes(double fraction, std::uint64_t dataset_size,
                                    std::uint64_t sample_bytes) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw config_error("estimate_buffer_bytes: fraction must be in (0, 1]");
    const auto stored = static_cast<std::uint64_t>(
        std::llround(fraction * static_cast<double>(dataset_size)));
    return stored * sample_bytes;
}

} // namespace drb
