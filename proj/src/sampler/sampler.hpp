#pragma once

#include "buffer/rehearsal_buffer.hpp"
#include "core/rng.hpp"
#include "core/types.hpp"
#include "sampler/size_table.hpp"
#include "transport/client.hpp"

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

namespace drb {

/**
 * Slots to fetch this round, uniform without replacement over every occupied
 * slot in the distributed buffer; entries keep their draw order so the
 * augmented batch layout is reproducible.
 */
struct sampling_plan {
    std::vector<slot_ref> entries;

    bool has_duplicates() const;
    std::vector<worker_id> distinct_owners() const;
};

/**
 * Draw min(want, view.total) distinct global slots, each equally likely
 * (slot-level uniformity: a worker holding more samples receives
 * proportionally more of the draw). Empty view yields an empty plan.
 */
sampling_plan plan(std::size_t want, const size_table::view& view, rng_stream& rng);

/// Variant restricted to the caller's own slots; the deliberately biased
/// negative control for the uniformity tests.
sampling_plan plan_local_only(std::size_t want, const size_table::view& view, worker_id self,
                              rng_stream& rng);

struct fetch_result {
    std::vector<sample> reps;        // in plan order
    std::uint64_t remote_frames = 0; // SAMPLE_REQ frames sent (== distinct remote owners)
    std::uint64_t substituted = 0;   // entries answered by a stale-index substitute
    std::uint64_t replanned = 0;     // entries re-planned around unreachable peers
};

/**
 * Materialize a plan: local entries via direct buffer reads, one consolidated
 * request per remote owner, results re-assembled in plan order. Piggybacked
 * occupancy rows are merged into the table. Entries owned by unreachable
 * peers are re-planned uniformly over the remaining reachable slots (logged
 * degradation, not failure). A set cancel flag abandons outstanding replies
 * and returns the partial result (shutdown path).
 */
fetch_result fetch(const sampling_plan& plan_, rpc_client* client, rehearsal_buffer& local,
                   size_table& table, rng_stream& substitute_rng, rng_stream& replan_rng,
                   std::uint64_t request_id, const std::atomic<bool>* cancel = nullptr);

/// m then reps; positions [0, |m|) are exactly m, [|m|, |m|+|reps|) the
/// representatives in plan order.
mini_batch augment(const mini_batch& m, std::span<const sample> reps);

} // namespace drb
