#pragma once

#include "core/rng.hpp"
#include "core/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace drb {

/**
 * Two-layer perceptron classifier: feature_dim -> hidden (ReLU) -> K logits,
 * trained with softmax cross-entropy. All K output units exist from
 * iteration 0; class-incremental labels map into the fixed K-way head.
 * Parameters live in one flat f32 vector [W1, b1, W2, b2] so the whole model
 * can go through the all-reduce as-is.
 */
class mlp_model {
public:
    mlp_model(std::uint32_t feature_dim, std::uint32_t hidden_dim, std::uint32_t n_classes);

    /// He-style init for the weights, zero biases. Draw order is fixed, so
    /// replicas consuming the same stream start bitwise identical.
    void init(rng_stream& rng);

    std::vector<float>& params() { return m_params; }
    const std::vector<float>& params() const { return m_params; }
    std::size_t param_count() const { return m_params.size(); }

    std::uint32_t feature_dim() const { return m_feature_dim; }
    std::uint32_t hidden_dim() const { return m_hidden_dim; }
    std::uint32_t n_classes() const { return m_n_classes; }

    /// Mean cross-entropy over the batch (f32 forward, double accumulation).
    double loss(const mini_batch& batch) const;

    /// Double-precision forward path for the finite-difference oracle.
    double loss_f64(const mini_batch& batch) const;

    /// Mean loss and its gradient; grad is resized to param_count().
    double loss_and_gradient(const mini_batch& batch, std::vector<float>& grad) const;

    void logits(const sample& s, std::span<float> out) const;

    /// FNV-1a over the raw parameter bytes; replica-consistency fingerprint.
    std::uint64_t param_checksum() const;

private:
    template <typename scalar> double loss_generic(const mini_batch& batch) const;

    std::uint32_t m_feature_dim;
    std::uint32_t m_hidden_dim;
    std::uint32_t m_n_classes;
    std::vector<float> m_params;

    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const { return std::size_t{m_feature_dim} * m_hidden_dim; }
    std::size_t w2_off() const { return b1_off() + m_hidden_dim; }
    std::size_t b2_off() const { return w2_off() + std::size_t{m_hidden_dim} * m_n_classes; }
};

} // namespace drb
