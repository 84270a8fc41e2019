#include "sampler/size_table.hpp"

#include "core/errors.hpp"

namespace drb {

size_table::size_table(std::uint32_t n_workers, std::uint32_t n_classes, worker_id self)
    : m_n_workers(n_workers), m_n_classes(n_classes), m_self(self) {
    m_rows.resize(n_workers);
}

void size_table::store_row(worker_id worker, std::uint64_t version,
                           const std::vector<std::uint32_t>& occupancy) {
    if (worker >= m_n_workers)
        throw usage_error("size_table: worker " + std::to_string(worker) + " out of range");
    if (occupancy.size() != m_n_classes)
        throw usage_error("size_table: occupancy row has wrong class count");
    {
        std::lock_guard lock(m_lock);
        auto& rows = m_rows[worker];
        rows.by_version[version] = occupancy;
        if (!rows.any || version > rows.latest)
            rows.latest = version;
        rows.any = true;
    }
    m_cv.notify_all();
}

slot_ref size_table::view::locate(std::uint64_t flat_index) const {
    for (worker_id w = 0; w < n_workers; ++w) {
        for (class_id c = 0; c < n_classes; ++c) {
            const std::uint64_t occ = occupancy[w][c];
            if (flat_index < occ)
                return slot_ref{w, c, static_cast<std::uint32_t>(flat_index)};
            flat_index -= occ;
        }
    }
    throw usage_error("size_table::view::locate: flat index out of range");
}

std::uint64_t size_table::view::worker_total(worker_id w) const {
    std::uint64_t total = 0;
    for (const auto occ : occupancy[w])
        total += occ;
    return total;
}

size_table::view size_table::latest_view() const {
    std::lock_guard lock(m_lock);
    view v;
    v.n_workers = m_n_workers;
    v.n_classes = m_n_classes;
    v.occupancy.resize(m_n_workers);
    for (worker_id w = 0; w < m_n_workers; ++w) {
        const auto& rows = m_rows[w];
        if (rows.any)
            v.occupancy[w] = rows.by_version.rbegin()->second; // max key == latest
        else
            v.occupancy[w].assign(m_n_classes, 0);
        for (const auto occ : v.occupancy[w])
            v.total += occ;
    }
    return v;
}

size_table::view size_table::view_at(std::uint64_t horizon, std::chrono::milliseconds timeout,
                                     std::uint32_t* degraded_out) const {
    std::unique_lock lock(m_lock);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (worker_id w = 0; w < m_n_workers && !m_interrupted; ++w) {
        while (!m_rows[w].by_version.count(horizon) && !m_interrupted) {
            if (m_cv.wait_until(lock, deadline) == std::cv_status::timeout)
                goto assemble; // degrade instead of stalling the pipeline
        }
    }
assemble:
    view v;
    v.n_workers = m_n_workers;
    v.n_classes = m_n_classes;
    v.occupancy.resize(m_n_workers);
    std::uint32_t degraded = 0;
    for (worker_id w = 0; w < m_n_workers; ++w) {
        const auto& by_version = m_rows[w].by_version;
        auto it = by_version.upper_bound(horizon);
        if (it == by_version.begin()) {
            v.occupancy[w].assign(m_n_classes, 0);
            ++degraded;
        } else {
            --it;
            v.occupancy[w] = it->second;
            if (it->first != horizon)
                ++degraded;
        }
        for (const auto occ : v.occupancy[w])
            v.total += occ;
    }
    if (degraded_out)
        *degraded_out = degraded;
    return v;
}

std::uint64_t size_table::latest_version(worker_id worker) const {
    std::lock_guard lock(m_lock);
    return m_rows[worker].any ? m_rows[worker].latest : 0;
}

void size_table::prune_below(std::uint64_t floor) {
    std::lock_guard lock(m_lock);
    for (auto& rows : m_rows) {
        if (!rows.any)
            continue;
        auto it = rows.by_version.begin();
        while (it != rows.by_version.end() && it->first < floor && it->first != rows.latest)
            it = rows.by_version.erase(it);
    }
}

void size_table::interrupt() {
    {
        std::lock_guard lock(m_lock);
        m_interrupted = true;
    }
    m_cv.notify_all();
}

} // namespace drb
