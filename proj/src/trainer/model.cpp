#include "trainer/model.hpp"

#include "core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace drb {

mlp_model::mlp_model(std::uint32_t feature_dim, std::uint32_t hidden_dim,
                     std::uint32_t n_classes)
    : m_feature_dim(feature_dim), m_hidden_dim(hidden_dim), m_n_classes(n_classes) {
    m_params.assign(b2_off() + n_classes, 0.0f);
}

void mlp_model::init(rng_stream& rng) {
    const double w1_scale = std::sqrt(2.0 / m_feature_dim);
    const double w2_scale = std::sqrt(2.0 / m_hidden_dim);
    for (std::size_t i = 0; i < b1_off(); ++i)
        m_params[i] = static_cast<float>(rng.gaussian() * w1_scale);
    for (std::size_t i = b1_off(); i < w2_off(); ++i)
        m_params[i] = 0.0f;
    for (std::size_t i = w2_off(); i < b2_off(); ++i)
        m_params[i] = static_cast<float>(rng.gaussian() * w2_scale);
    for (std::size_t i = b2_off(); i < m_params.size(); ++i)
        m_params[i] = 0.0f;
}

template <typename scalar>
double mlp_model::loss_generic(const mini_batch& batch) const {
    if (batch.empty())
        return 0.0;
    const float* w1 = m_params.data() + w1_off();
    const float* b1 = m_params.data() + b1_off();
    const float* w2 = m_params.data() + w2_off();
    const float* b2 = m_params.data() + b2_off();

    std::vector<scalar> hidden(m_hidden_dim);
    std::vector<scalar> out(m_n_classes);
    double total = 0.0;
    for (const auto& s : batch) {
        for (std::uint32_t h = 0; h < m_hidden_dim; ++h) {
            scalar acc = static_cast<scalar>(b1[h]);
            const float* row = w1 + std::size_t{h} * m_feature_dim;
            for (std::uint32_t f = 0; f < m_feature_dim; ++f)
                acc += static_cast<scalar>(row[f]) * static_cast<scalar>(s.features[f]);
            hidden[h] = acc > scalar(0) ? acc : scalar(0);
        }
        for (std::uint32_t k = 0; k < m_n_classes; ++k) {
            scalar acc = static_cast<scalar>(b2[k]);
            const float* row = w2 + std::size_t{k} * m_hidden_dim;
            for (std::uint32_t h = 0; h < m_hidden_dim; ++h)
                acc += static_cast<scalar>(row[h]) * hidden[h];
            out[k] = acc;
        }
        scalar max_logit = out[0];
        for (std::uint32_t k = 1; k < m_n_classes; ++k)
            max_logit = std::max(max_logit, out[k]);
        scalar sum_exp = 0;
        for (std::uint32_t k = 0; k < m_n_classes; ++k)
            sum_exp += std::exp(out[k] - max_logit);
        total += static_cast<double>(max_logit + std::log(sum_exp) - out[s.label]);
    }
    return total / static_cast<double>(batch.size());
}

double mlp_model::loss(const mini_batch& batch) const {
    return loss_generic<float>(batch);
}

double mlp_model::loss_f64(const mini_batch& batch) const {
    return loss_generic<double>(batch);
}

double mlp_model::loss_and_gradient(const mini_batch& batch, std::vector<float>& grad) const {
    grad.assign(m_params.size(), 0.0f);
    if (batch.empty())
        return 0.0;
    const float* w1 = m_params.data() + w1_off();
    const float* b1 = m_params.data() + b1_off();
    const float* w2 = m_params.data() + w2_off();
    const float* b2 = m_params.data() + b2_off();
    float* g_w1 = grad.data() + w1_off();
    float* g_b1 = grad.data() + b1_off();
    float* g_w2 = grad.data() + w2_off();
    float* g_b2 = grad.data() + b2_off();

    std::vector<float> hidden(m_hidden_dim);
    std::vector<float> probs(m_n_classes);
    std::vector<float> d_hidden(m_hidden_dim);
    const float inv_batch = 1.0f / static_cast<float>(batch.size());
    double total = 0.0;

    for (const auto& s : batch) {
        if (s.label >= m_n_classes)
            throw training_error("label " + std::to_string(s.label) + " out of range");
        for (std::uint32_t h = 0; h < m_hidden_dim; ++h) {
            float acc = b1[h];
            const float* row = w1 + std::size_t{h} * m_feature_dim;
            for (std::uint32_t f = 0; f < m_feature_dim; ++f)
                acc += row[f] * s.features[f];
            hidden[h] = acc > 0.0f ? acc : 0.0f;
        }
        float max_logit = -std::numeric_limits<float>::infinity();
        for (std::uint32_t k = 0; k < m_n_classes; ++k) {
            float acc = b2[k];
            const float* row = w2 + std::size_t{k} * m_hidden_dim;
            for (std::uint32_t h = 0; h < m_hidden_dim; ++h)
                acc += row[h] * hidden[h];
            probs[k] = acc;
            max_logit = std::max(max_logit, acc);
        }
        float sum_exp = 0.0f;
        for (std::uint32_t k = 0; k < m_n_classes; ++k) {
            probs[k] = std::exp(probs[k] - max_logit);
            sum_exp += probs[k];
        }
        const float inv_sum = 1.0f / sum_exp;
        total += -std::log(std::max(static_cast<double>(probs[s.label]) * inv_sum, 1e-300));

        // d(loss)/d(logit_k) = softmax_k - [k == label], scaled by 1/|batch|
        std::fill(d_hidden.begin(), d_hidden.end(), 0.0f);
        for (std::uint32_t k = 0; k < m_n_classes; ++k) {
            float delta = probs[k] * inv_sum;
            if (k == s.label)
                delta -= 1.0f;
            delta *= inv_batch;
            g_b2[k] += delta;
            float* g_row = g_w2 + std::size_t{k} * m_hidden_dim;
            const float* row = w2 + std::size_t{k} * m_hidden_dim;
            for (std::uint32_t h = 0; h < m_hidden_dim; ++h) {
                g_row[h] += delta * hidden[h];
                d_hidden[h] += delta * row[h];
            }
        }
        for (std::uint32_t h = 0; h < m_hidden_dim; ++h) {
            if (hidden[h] <= 0.0f)
                continue; // ReLU gate
            g_b1[h] += d_hidden[h];
            float* g_row = g_w1 + std::size_t{h} * m_feature_dim;
            for (std::uint32_t f = 0; f < m_feature_dim; ++f)
                g_row[f] += d_hidden[h] * s.features[f];
        }
    }
    return total / static_cast<double>(batch.size());
}

void mlp_model::logits(const sample& s, std::span<float> out) const {
    const float* w1 = m_params.data() + w1_off();
    const float* b1 = m_params.data() + b1_off();
    const float* w2 = m_params.data() + w2_off();
    const float* b2 = m_params.data() + b2_off();
    std::vector<float> hidden(m_hidden_dim);
    for (std::uint32_t h = 0; h < m_hidden_dim; ++h) {
        float acc = b1[h];
        const float* row = w1 + std::size_t{h} * m_feature_dim;
        for (std::uint32_t f = 0; f < m_feature_dim; ++f)
            acc += row[f] * s.features[f];
        hidden[h] = acc > 0.0f ? acc : 0.0f;
    }
    for (std::uint32_t k = 0; k < m_n_classes; ++k) {
        float acc = b2[k];
        const float* row = w2 + std::size_t{k} * m_hidden_dim;
        for (std::uint32_t h = 0; h < m_hidden_dim; ++h)
            acc += row[h] * hidden[h];
        out[k] = acc;
    }
}

std::uint64_t mlp_model::param_checksum() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(m_params.data());
    const std::size_t len = m_params.size() * sizeof(float);
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

} // namespace drb
