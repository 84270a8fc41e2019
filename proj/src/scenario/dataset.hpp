#pragma once

#include "core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drb {

/**
 * In-memory dataset backing a run. On disk this is the DRDS format:
 *   magic "DRDS", version u16, sample_count u64, feature_dim u32,
 *   class_count u32, then sample_count records of feature_dim f32 LE +
 *   label u32 LE — everything little-endian, bit-exact.
 * Train samples come first, eval samples after; the boundary is recorded in
 * a `<path>.split` sidecar ("train <n>" / "eval <m>" lines).
 */
struct dataset {
    std::uint32_t feature_dim = 0;
    std::uint32_t n_classes = 0;
    std::vector<float> features; // sample-major, feature_dim per sample
    std::vector<class_id> labels;
    std::size_t train_count = 0;
    std::size_t eval_count = 0;

    std::size_t size() const { return labels.size(); }
    sample get(std::size_t index) const;

    /// Train-set indices whose label is in `classes`.
    std::vector<std::size_t> train_indices_of(const std::vector<class_id>& classes) const;
    /// Eval-set indices whose label is in `classes`.
    std::vector<std::size_t> eval_indices_of(const std::vector<class_id>& classes) const;

    mini_batch gather(const std::vector<std::size_t>& indices) const;
};

dataset load_dataset(const std::string& path);
void write_dataset(const dataset& data, const std::string& path);

/**
 * Gaussian-blob dataset: class means drawn at random directions then scaled
 * so every pair is at least `separation` apart, unit covariance around each.
 * Per class, 80% of the samples land in the train block, the rest in eval.
 * Deterministic under the seed.
 */
dataset synth_dataset(std::uint32_t n_classes, std::uint32_t per_class,
                      std::uint32_t feature_dim, double separation, std::uint64_t seed);

} // namespace drb
