#include "sampler/sampler.hpp"

#include "core/errors.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <unordered_set>

namespace drb {

namespace {
// High bit distinguishing the re-plan round's request ids from the original
// fetch on the same connection.
constexpr std::uint64_t k_replan_bit = 1ULL << 59;
} // namespace

bool sampling_plan::has_duplicates() const {
    auto sorted = entries;
    std::sort(sorted.begin(), sorted.end(), [](const slot_ref& a, const slot_ref& b) {
        return std::tie(a.owner, a.cls, a.slot) < std::tie(b.owner, b.cls, b.slot);
    });
    return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

std::vector<worker_id> sampling_plan::distinct_owners() const {
    std::vector<worker_id> owners;
    for (const auto& e : entries)
        owners.push_back(e.owner);
    std::sort(owners.begin(), owners.end());
    owners.erase(std::unique(owners.begin(), owners.end()), owners.end());
    return owners;
}

namespace {

sampling_plan plan_over_flat(std::size_t want, std::uint64_t total,
                             const std::function<slot_ref(std::uint64_t)>& locate,
                             rng_stream& rng) {
    sampling_plan p;
    if (total == 0 || want == 0)
        return p;
    if (want >= total) {
        // Exhaustion: every occupied slot is included.
        p.entries.reserve(total);
        for (std::uint64_t flat = 0; flat < total; ++flat)
            p.entries.push_back(locate(flat));
        return p;
    }
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(want * 2);
    p.entries.reserve(want);
    while (p.entries.size() < want) {
        const std::uint64_t flat = rng.bounded(total);
        if (chosen.insert(flat).second)
            p.entries.push_back(locate(flat));
    }
    return p;
}

} // namespace

sampling_plan plan(std::size_t want, const size_table::view& view, rng_stream& rng) {
    return plan_over_flat(want, view.total,
                          [&view](std::uint64_t flat) { return view.locate(flat); }, rng);
}

sampling_plan plan_local_only(std::size_t want, const size_table::view& view, worker_id self,
                              rng_stream& rng) {
    const std::uint64_t local_total = view.worker_total(self);
    auto locate = [&view, self](std::uint64_t flat) {
        for (class_id c = 0; c < view.n_classes; ++c) {
            const std::uint64_t occ = view.occupancy[self][c];
            if (flat < occ)
                return slot_ref{self, c, static_cast<std::uint32_t>(flat)};
            flat -= occ;
        }
        throw usage_error("plan_local_only: flat index out of range");
    };
    return plan_over_flat(want, local_total, locate, rng);
}

namespace {

struct owner_group {
    std::vector<std::size_t> positions; // indices into plan.entries
    wire::sample_request request;
};

void read_local_entries(const owner_group& group, const sampling_plan& p,
                        rehearsal_buffer& local, rng_stream& substitute_rng,
                        std::vector<std::optional<sample>>& out, fetch_result& result) {
    std::vector<read_request> requests;
    requests.reserve(group.positions.size());
    for (const auto pos : group.positions)
        requests.push_back({p.entries[pos].cls, p.entries[pos].slot});
    const auto entries = local.read_slots(requests, substitute_rng);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].status == read_status::empty)
            continue;
        if (entries[i].status == read_status::substituted)
            ++result.substituted;
        out[group.positions[i]] = entries[i].value;
    }
}

} // namespace

fetch_result fetch(const sampling_plan& plan_, rpc_client* client, rehearsal_buffer& local,
                   size_table& table, rng_stream& substitute_rng, rng_stream& replan_rng,
                   std::uint64_t request_id, const std::atomic<bool>* cancel) {
    const auto cancelled = [cancel] { return cancel != nullptr && cancel->load(); };
    fetch_result result;
    std::vector<std::optional<sample>> assembled(plan_.entries.size());

    std::map<worker_id, owner_group> groups;
    for (std::size_t i = 0; i < plan_.entries.size(); ++i) {
        auto& g = groups[plan_.entries[i].owner];
        g.positions.push_back(i);
        g.request.slots.push_back({plan_.entries[i].cls, plan_.entries[i].slot});
    }

    const worker_id self = table.self();
    std::vector<std::pair<worker_id, std::future<wire::sample_response>>> futures;
    std::vector<worker_id> down_owners;
    for (auto& [owner, group] : groups) {
        if (owner == self) {
            read_local_entries(group, plan_, local, substitute_rng, assembled, result);
            continue;
        }
        if (client == nullptr)
            throw usage_error("fetch: remote owner in plan but no transport client");
        try {
            futures.emplace_back(owner,
                                 client->send_sample_request(owner, group.request, request_id));
            ++result.remote_frames;
        } catch (const transport_error&) {
            down_owners.push_back(owner);
        }
    }

    bool abandoned = false;
    for (auto& [owner, future] : futures) {
        try {
            while (future.wait_for(std::chrono::milliseconds(20)) !=
                   std::future_status::ready) {
                if (cancelled()) {
                    abandoned = true;
                    break;
                }
            }
            if (abandoned)
                break;
            const auto resp = future.get();
            table.store_row(resp.sizes.worker, resp.sizes.version, resp.sizes.occupancy);
            const auto& positions = groups[owner].positions;
            if (resp.entries.size() != positions.size())
                throw protocol_error("sample response entry count mismatch from worker " +
                                     std::to_string(owner));
            for (std::size_t i = 0; i < resp.entries.size(); ++i) {
                const auto& e = resp.entries[i];
                if (static_cast<read_status>(e.flag) == read_status::empty)
                    continue;
                if (static_cast<read_status>(e.flag) == read_status::substituted)
                    ++result.substituted;
                assembled[positions[i]] = e.value;
            }
        } catch (const transport_error&) {
            down_owners.push_back(owner);
        }
    }

    // Re-plan entries lost to unreachable peers uniformly over the slots of
    // the remaining reachable workers, excluding slots already in this plan.
    std::size_t missing = 0;
    for (const auto& slot : assembled)
        if (!slot)
            ++missing;
    if (missing > 0 && !abandoned && !cancelled() && (request_id & k_replan_bit) == 0) {
        auto view = table.latest_view();
        for (const auto owner : down_owners)
            view.occupancy[owner].assign(view.n_classes, 0);
        view.total = 0;
        for (worker_id w = 0; w < view.n_workers; ++w)
            view.total += view.worker_total(w);

        std::unordered_set<std::uint64_t> taken; // packed refs already planned
        auto pack = [](const slot_ref& ref) {
            return (static_cast<std::uint64_t>(ref.owner) << 48) |
                   (static_cast<std::uint64_t>(ref.cls) << 24) | ref.slot;
        };
        for (const auto& ref : plan_.entries)
            taken.insert(pack(ref));

        sampling_plan extra;
        std::uint64_t attempts = 0;
        while (extra.entries.size() < missing && attempts < 64) {
            auto candidate_plan =
                plan(missing - extra.entries.size() + taken.size(), view, replan_rng);
            for (const auto& ref : candidate_plan.entries) {
                if (extra.entries.size() >= missing)
                    break;
                if (taken.insert(pack(ref)).second)
                    extra.entries.push_back(ref);
            }
            if (candidate_plan.entries.size() >= view.total)
                break; // domain exhausted
            ++attempts;
        }
        if (!extra.entries.empty()) {
            auto extra_result = fetch(extra, client, local, table, substitute_rng, replan_rng,
                                      request_id | k_replan_bit, cancel);
            result.remote_frames += extra_result.remote_frames;
            result.substituted += extra_result.substituted;
            std::size_t take = 0;
            for (auto& slot : assembled) {
                if (slot || take >= extra_result.reps.size())
                    continue;
                slot = std::move(extra_result.reps[take++]);
                ++result.replanned;
            }
        }
    }

    result.reps.reserve(plan_.entries.size());
    for (auto& slot : assembled)
        if (slot)
            result.reps.push_back(std::move(*slot));
    return result;
}

mini_batch augment(const mini_batch& m, std::span<const sample> reps) {
    mini_batch out;
    out.reserve(m.size() + reps.size());
    out.insert(out.end(), m.begin(), m.end());
    out.insert(out.end(), reps.begin(), reps.end());
    return out;
}

} // namespace drb
