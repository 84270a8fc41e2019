#include "buffer/rehearsal_buffer.hpp"

#include "core/errors.hpp"

#include <algorithm>
#include <numeric>

namespace drb {

std::uint64_t occupancy_snapshot::total() const {
    return std::accumulate(per_class.begin(), per_class.end(), std::uint64_t{0});
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    rng_stream& rng) {
    k = std::min(k, n);
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k entries are a uniform ordered sample.
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t swap_with = j + rng.bounded(n - j);
        std::swap(indices[j], indices[swap_with]);
    }
    indices.resize(k);
    return indices;
}

rehearsal_buffer::rehearsal_buffer(std::uint32_t n_classes, std::size_t per_class_cap)
    : m_n_classes(n_classes), m_per_class_cap(per_class_cap) {
    if (n_classes == 0 || per_class_cap == 0)
        throw config_error("rehearsal_buffer: class count and per-class capacity must be >= 1");
    m_classes.reserve(n_classes);
    for (std::uint32_t i = 0; i < n_classes; ++i)
        m_classes.push_back(std::make_unique<class_buffer>());
}

insertion_report rehearsal_buffer::update_buffer(const mini_batch& m,
                                                 std::size_t candidate_count,
                                                 rng_stream& candidate_rng,
                                                 rng_stream& eviction_rng) {
    insertion_report report;
    if (m.empty())
        return report;
    for (const auto& s : m)
        if (s.label >= m_n_classes)
            throw usage_error("update_buffer: label " + std::to_string(s.label) +
                              " out of range (K=" + std::to_string(m_n_classes) + ")");

    const auto chosen = sample_without_replacement(m.size(), candidate_count, candidate_rng);
    for (const std::size_t idx : chosen) {
        const sample& candidate = m[idx];
        auto& cb = cls(candidate.label);
        auto& per_class = report.per_class[candidate.label];

        std::shared_lock snapshot_gate(m_snapshot_gate);
        std::unique_lock class_lock(cb.lock);
        if (cb.slots.empty())
            cb.slots.reserve(m_per_class_cap);
        std::uint32_t slot;
        char kind;
        if (cb.slots.size() < m_per_class_cap) {
            kind = 'a';
            slot = static_cast<std::uint32_t>(cb.slots.size());
            cb.slots.push_back(candidate);
            cb.occupancy.store(static_cast<std::uint32_t>(cb.slots.size()),
                               std::memory_order_release);
            m_total.fetch_add(1, std::memory_order_relaxed);
            ++per_class.appends;
            ++report.appends;
        } else {
            kind = 'r';
            slot = static_cast<std::uint32_t>(eviction_rng.bounded(cb.slots.size()));
            if (cb.slots[slot].label != candidate.label)
                m_cross_class_evictions.fetch_add(1, std::memory_order_relaxed);
            cb.slots[slot] = candidate;
            ++per_class.replacements;
            ++report.replacements;
        }
        m_version.fetch_add(1, std::memory_order_acq_rel);
        if (m_log_mutations) {
            std::lock_guard log_lock(m_log_lock);
            m_log.push_back({candidate.label, kind, slot});
        }
    }
    return report;
}

std::vector<read_entry> rehearsal_buffer::read_slots(std::span<const read_request> requests,
                                                     rng_stream& substitute_rng) {
    std::vector<read_entry> out;
    out.reserve(requests.size());
    for (const auto& req : requests) {
        read_entry entry;
        if (req.cls < m_n_classes) {
            auto& cb = cls(req.cls);
            std::shared_lock class_lock(cb.lock);
            const std::size_t occ = cb.slots.size();
            if (occ > 0) {
                if (req.slot < occ) {
                    entry.status = read_status::exact;
                    entry.value = cb.slots[req.slot];
                } else {
                    entry.status = read_status::substituted;
                    entry.value = cb.slots[substitute_rng.bounded(occ)];
                }
            }
        }
        if (entry.status == read_status::empty) {
            // Class has nothing stored; fall back to a uniform draw over every
            // occupied slot of the whole buffer, if any exists.
            const std::uint64_t total = m_total.load(std::memory_order_acquire);
            if (total > 0) {
                std::uint64_t flat = substitute_rng.bounded(total);
                for (std::uint32_t c = 0; c < m_n_classes; ++c) {
                    auto& cb = cls(c);
                    std::shared_lock class_lock(cb.lock);
                    const std::size_t occ = cb.slots.size();
                    if (flat < occ) {
                        entry.status = read_status::substituted;
                        entry.value = cb.slots[flat];
                        break;
                    }
                    flat -= occ;
                }
                // A concurrent append may shift the flat mapping; retry once
                // from the front in that unlikely case.
                if (entry.status == read_status::empty) {
                    for (std::uint32_t c = 0; c < m_n_classes && entry.status == read_status::empty; ++c) {
                        auto& cb = cls(c);
                        std::shared_lock class_lock(cb.lock);
                        if (!cb.slots.empty()) {
                            entry.status = read_status::substituted;
                            entry.value = cb.slots[substitute_rng.bounded(cb.slots.size())];
                        }
                    }
                }
            }
        }
        out.push_back(std::move(entry));
    }
    return out;
}

occupancy_snapshot rehearsal_buffer::snapshot() const {
    std::unique_lock gate(m_snapshot_gate); // excludes writers buffer-wide
    occupancy_snapshot snap;
    snap.per_class.resize(m_n_classes);
    for (std::uint32_t c = 0; c < m_n_classes; ++c)
        snap.per_class[c] = m_classes[c]->occupancy.load(std::memory_order_acquire);
    snap.version = m_version.load(std::memory_order_acquire);
    return snap;
}

void rehearsal_buffer::enable_mutation_log() {
    m_log_mutations = true;
}

std::vector<rehearsal_buffer::mutation> rehearsal_buffer::mutation_log() const {
    std::lock_guard log_lock(m_log_lock);
    return m_log;
}

} // namespace drb
