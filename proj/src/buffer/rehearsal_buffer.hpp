#pragma once

#include "core/rng.hpp"
#include "core/types.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <vector>

namespace drb {

/// Per-class counts of appends and random replacements from one update.
struct insertion_report {
    struct counts {
        std::uint32_t appends = 0;
        std::uint32_t replacements = 0;
    };
    std::map<class_id, counts> per_class;
    std::uint32_t appends = 0;
    std::uint32_t replacements = 0;
};

struct read_request {
    class_id cls = 0;
    std::uint32_t slot = 0;
};

enum class read_status : std::uint8_t {
    exact = 0,       // slot held a value; that exact value is returned
    substituted = 1, // stale index; a uniformly drawn occupied slot answered instead
    empty = 2,       // nothing stored anywhere; no sample available
};

struct read_entry {
    read_status status = read_status::empty;
    sample value;
};

struct occupancy_snapshot {
    std::vector<std::uint32_t> per_class; // indexed by class id, length K
    std::uint64_t version = 0;
    std::uint64_t total() const;
};

/**
 * The per-process rehearsal buffer: one bounded slot array per class.
 * Candidates from incoming mini-batches are drawn uniformly without
 * replacement; a candidate of class i appends to that class while there is
 * room and otherwise overwrites a uniformly chosen resident slot of the
 * same class, so competition never crosses class boundaries.
 *
 * Thread-safe: concurrent readers (local and RPC-driven) share per-class
 * locks with one writer; snapshots briefly exclude writers buffer-wide.
 */
class rehearsal_buffer {
public:
    rehearsal_buffer(std::uint32_t n_classes, std::size_t per_class_cap);

    /**
     * Insert min(candidate_count, |m|) candidates chosen uniformly without
     * replacement from m. Labels must be < K. The version counter advances
     * once per mutation.
     */
    insertion_report update_buffer(const mini_batch& m, std::size_t candidate_count,
                                   rng_stream& candidate_rng, rng_stream& eviction_rng);

    /**
     * Answer a batch of slot reads. Requests whose slot index is stale
     * (>= current occupancy) are served by a substitute drawn uniformly from
     * the occupied slots of that class, falling back to the whole buffer when
     * the class is empty; only a fully empty buffer yields an empty entry.
     * Returned samples are never torn: each is exactly one value that
     * occupied a slot at some instant during the call.
     */
    std::vector<read_entry> read_slots(std::span<const read_request> requests,
                                       rng_stream& substitute_rng);

    /// Consistent occupancy snapshot: the counts held simultaneously at the
    /// returned version.
    occupancy_snapshot snapshot() const;

    std::uint32_t n_classes() const { return m_n_classes; }
    std::size_t per_class_cap() const { return m_per_class_cap; }
    std::uint64_t total_stored() const { return m_total.load(std::memory_order_relaxed); }

    /// Evictions that displaced a sample of a different class. Structurally
    /// impossible; kept as a checked invariant counter.
    std::uint64_t cross_class_evictions() const {
        return m_cross_class_evictions.load(std::memory_order_relaxed);
    }

    // Ordered mutation log for linearizability tests (s = append, r = replace).
    struct mutation {
        class_id cls;
        char kind;
        std::uint32_t slot;
    };
    void enable_mutation_log();
    std::vector<mutation> mutation_log() const;

private:
    struct class_buffer {
        mutable std::shared_mutex lock;
        std::vector<sample> slots;
        std::atomic<std::uint32_t> occupancy{0};
    };

    const class_buffer& cls(class_id id) const { return *m_classes[id]; }
    class_buffer& cls(class_id id) { return *m_classes[id]; }

    std::uint32_t m_n_classes;
    std::size_t m_per_class_cap;
    std::vector<std::unique_ptr<class_buffer>> m_classes;
    // Writers hold this shared, snapshot() holds it exclusively.
    mutable std::shared_mutex m_snapshot_gate;
    std::atomic<std::uint64_t> m_version{0};
    std::atomic<std::uint64_t> m_total{0};
    std::atomic<std::uint64_t> m_cross_class_evictions{0};

    bool m_log_mutations = false;
    mutable std::mutex m_log_lock;
    std::vector<mutation> m_log;
};

/// Uniform draw of k distinct indices from [0, n), in selection order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    rng_stream& rng);

} // namespace drb
