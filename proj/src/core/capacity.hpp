#pragma once

#include <cstddef>
#include <cstdint>

namespace drb {

/**
 * Slots available per class on one worker: floor(s_max / n_classes).
 * The local budget is divided evenly between the classes; remainder slots
 * stay unused so no class is favored. Throws config_error when s_max does
 * not provide at least one slot per class.
 */
std::size_t per_class_capacity(std::size_t s_max, std::size_t n_classes);

/// Aggregate per-class slots across all workers: n_workers * floor(s_max / n_classes).
std::size_t aggregate_class_capacity(std::size_t n_workers, std::size_t s_max,
                                     std::size_t n_classes);

/**
 * Raw byte footprint of storing `fraction` of a dataset:
 * round(fraction * dataset_size) * sample_bytes. fraction must be in (0, 1].
 */
std::uint64_t estimate_buffer_bytes(double fraction, std::uint64_t dataset_size,
                                    std::uint64_t sample_bytes);

} // namespace drb
