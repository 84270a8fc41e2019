#include "buffer/rehearsal_buffer.hpp"
#include "core/errors.hpp"
#include "metrics/stats.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <thread>

using namespace drb;

namespace {

sample make_sample(class_id label, float tag) {
    return sample{{tag, tag + 0.5f}, label};
}

mini_batch fresh_batch(std::size_t count, class_id label, float base = 0.0f) {
    mini_batch m;
    for (std::size_t i = 0; i < count; ++i)
        m.push_back(make_sample(label, base + static_cast<float>(i)));
    return m;
}

rng_stream stream(std::uint64_t salt) {
    return rng_stream(1000 + salt, 0, rng_stream::purpose::candidate_selection);
}

} // namespace

TEST_CASE("empty buffers always append the selected candidates") {
    rehearsal_buffer buf(4, 10);
    auto cand = stream(1);
    auto evict = stream(2);
    mini_batch m;
    for (int i = 0; i < 8; ++i)
        m.push_back(make_sample(static_cast<class_id>(i % 4), static_cast<float>(i)));
    const auto report = buf.update_buffer(m, 2, cand, evict);
    CHECK(report.appends == 2);
    CHECK(report.replacements == 0);
    CHECK(buf.total_stored() == 2);
    CHECK(buf.snapshot().version == 2);
}

TEST_CASE("short final batches select min(c, |m|)") {
    rehearsal_buffer buf(2, 10);
    auto cand = stream(3);
    auto evict = stream(4);
    const auto report = buf.update_buffer(fresh_batch(3, 0), 14, cand, evict);
    CHECK(report.appends == 3);
    CHECK(buf.update_buffer({}, 14, cand, evict).appends == 0);
}

TEST_CASE("labels outside K are rejected") {
    rehearsal_buffer buf(2, 4);
    auto cand = stream(5);
    auto evict = stream(6);
    CHECK_THROWS_AS(buf.update_buffer(fresh_batch(1, 7), 1, cand, evict), usage_error);
}

TEST_CASE("candidate selection hits each batch position with probability c/b") {
    const std::size_t b = 56, c = 14;
    const int trials = 20000;
    std::vector<std::uint64_t> hits(b, 0);
    auto cand = stream(7);
    mini_batch m = fresh_batch(b, 0);
    for (int t = 0; t < trials; ++t) {
        const auto chosen = sample_without_replacement(b, c, cand);
        for (const auto idx : chosen)
            ++hits[idx];
    }
    // Without-replacement draws shrink the Pearson statistic by (b-c)/(b-1);
    // rescale before the chi-square lookup.
    const double expected = static_cast<double>(trials) * c / b;
    double stat = 0;
    for (const auto h : hits) {
        const double d = static_cast<double>(h) - expected;
        stat += d * d / expected;
    }
    stat *= static_cast<double>(b - 1) / static_cast<double>(b - c);
    const double p = chi_square_pvalue(stat, b - 1);
    CHECK(p > 0.01);
    // Marginal rate within 3 sigma overall.
    std::uint64_t total = 0;
    for (const auto h : hits)
        total += h;
    CHECK(total == static_cast<std::uint64_t>(trials) * c);
}

TEST_CASE("full class buffers evict uniformly at random") {
    const std::size_t cap = 4;
    const int trials = 100000;
    // One insertion into a full buffer per trial; count which resident slot
    // the candidate displaced via a tag encoded in the features.
    std::vector<std::uint64_t> evictions(cap, 0);
    rehearsal_buffer buf(1, cap);
    auto cand = stream(8);
    auto evict = stream(9);
    buf.update_buffer(fresh_batch(cap, 0, 1000.0f), cap, cand, evict); // fill s1..s4
    rng_stream sub(1, 0, rng_stream::purpose::slot_substitute);

    std::vector<read_request> all_slots;
    for (std::uint32_t i = 0; i < cap; ++i)
        all_slots.push_back({0, i});

    std::vector<float> current(cap);
    for (std::size_t i = 0; i < cap; ++i)
        current[i] = 1000.0f + static_cast<float>(i);

    for (int t = 0; t < trials; ++t) {
        const float tag = 2000.0f + static_cast<float>(t);
        buf.update_buffer(fresh_batch(1, 0, tag), 1, cand, evict);
        const auto entries = buf.read_slots(all_slots, sub);
        std::size_t replaced = cap;
        for (std::size_t i = 0; i < cap; ++i) {
            if (entries[i].value.features[0] != current[i]) {
                replaced = i;
                current[i] = entries[i].value.features[0];
                break;
            }
        }
        REQUIRE(replaced < cap);
        ++evictions[replaced];
        CHECK(buf.total_stored() == cap); // occupancy pinned at capacity
    }
    const auto res = pearson_uniform(evictions);
    CHECK(res.p_value > 0.01);
    // ~25000 +- 3 sigma per slot
    const double sigma = std::sqrt(trials * 0.25 * 0.75);
    for (const auto e : evictions)
        CHECK(std::abs(static_cast<double>(e) - trials / 4.0) < 3 * sigma);
}

TEST_CASE("class-incremental runs never evict across classes") {
    rehearsal_buffer buf(6, 3);
    auto cand = stream(10);
    auto evict = stream(11);
    // Disjoint "tasks": classes {0,1}, then {2,3}, then {4,5}; keep inserting
    // past capacity so replacements do occur.
    for (class_id task_base = 0; task_base < 6; task_base += 2)
        for (int round = 0; round < 40; ++round) {
            mini_batch m;
            for (int i = 0; i < 8; ++i)
                m.push_back(make_sample(task_base + (i % 2), static_cast<float>(round * 8 + i)));
            buf.update_buffer(m, 4, cand, evict);
        }
    CHECK(buf.cross_class_evictions() == 0);
    const auto snap = buf.snapshot();
    for (const auto occ : snap.per_class)
        CHECK(occ == 3); // every class present and at capacity: never displaced
}

TEST_CASE("occupancy never exceeds capacity and total never exceeds S_max") {
    const std::size_t cap = 5;
    rehearsal_buffer buf(3, cap);
    auto cand = stream(12);
    auto evict = stream(13);
    for (int round = 0; round < 100; ++round) {
        mini_batch m;
        for (int i = 0; i < 10; ++i)
            m.push_back(make_sample(static_cast<class_id>((round + i) % 3),
                                    static_cast<float>(round * 10 + i)));
        buf.update_buffer(m, 6, cand, evict);
        const auto snap = buf.snapshot();
        std::uint64_t total = 0;
        for (const auto occ : snap.per_class) {
            CHECK(occ <= cap);
            total += occ;
        }
        CHECK(total <= 3 * cap);
        CHECK(total == buf.total_stored());
    }
}

TEST_CASE("read_slots answers exact, substituted and empty cases") {
    rehearsal_buffer buf(3, 4);
    auto cand = stream(14);
    auto evict = stream(15);
    rng_stream sub(1, 0, rng_stream::purpose::slot_substitute);

    SUBCASE("empty buffer reports empty") {
        const std::vector<read_request> reqs{{0, 0}};
        const auto entries = buf.read_slots(reqs, sub);
        CHECK(entries[0].status == read_status::empty);
    }

    buf.update_buffer(fresh_batch(1, 1, 42.0f), 1, cand, evict);

    SUBCASE("exact hit returns the stored sample") {
        const std::vector<read_request> reqs{{1, 0}};
        const auto entries = buf.read_slots(reqs, sub);
        CHECK(entries[0].status == read_status::exact);
        CHECK(entries[0].value.features[0] == 42.0f);
    }

    SUBCASE("stale index substitutes uniformly from the same class") {
        buf.update_buffer(fresh_batch(4, 1, 50.0f), 4, cand, evict); // occupancy now 4
        const std::vector<read_request> reqs{{1, 9}};
        for (int i = 0; i < 50; ++i) {
            const auto entries = buf.read_slots(reqs, sub);
            CHECK(entries[0].status == read_status::substituted);
            CHECK(entries[0].value.label == 1);
        }
    }

    SUBCASE("unknown class falls back to any occupied slot") {
        const std::vector<read_request> reqs{{2, 0}};
        const auto entries = buf.read_slots(reqs, sub);
        CHECK(entries[0].status == read_status::substituted);
        CHECK(entries[0].value.label == 1);
    }
}

TEST_CASE("concurrent reads never observe torn samples") {
    // Feature vectors are a function of features[0]; any mix of two samples
    // breaks the relation.
    const std::size_t cap = 8;
    const std::uint32_t dim = 16;
    rehearsal_buffer buf(1, cap);
    auto make = [&](float id) {
        sample s;
        s.label = 0;
        s.features.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i)
            s.features[i] = id * 31.0f + static_cast<float>(i) * id;
        return s;
    };
    auto cand = stream(16);
    auto evict = stream(17);
    {
        mini_batch m;
        for (std::size_t i = 0; i < cap; ++i)
            m.push_back(make(static_cast<float>(i + 1)));
        buf.update_buffer(m, cap, cand, evict);
    }

    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> torn{0};
    std::vector<std::thread> readers;
    for (int r = 0; r < 3; ++r) {
        readers.emplace_back([&, r] {
            rng_stream sub(99 + r, 0, rng_stream::purpose::slot_substitute);
            std::vector<read_request> reqs;
            for (std::uint32_t i = 0; i < cap; ++i)
                reqs.push_back({0, i});
            while (!stop.load()) {
                const auto entries = buf.read_slots(reqs, sub);
                for (const auto& e : entries) {
                    const float id = e.value.features[0] / 31.0f;
                    for (std::uint32_t i = 0; i < dim; ++i)
                        if (e.value.features[i] != id * 31.0f + static_cast<float>(i) * id)
                            torn.fetch_add(1);
                }
            }
        });
    }
    std::thread writer([&] {
        auto wc = stream(18);
        auto we = stream(19);
        for (int round = 0; round < 3000; ++round) {
            mini_batch m{make(static_cast<float>(100 + round))};
            buf.update_buffer(m, 1, wc, we);
        }
        stop.store(true);
    });
    writer.join();
    for (auto& t : readers)
        t.join();
    CHECK(torn.load() == 0);
}

TEST_CASE("snapshots are linearizable against the mutation log") {
    const std::size_t cap = 6;
    rehearsal_buffer buf(4, cap);
    buf.enable_mutation_log();

    std::vector<occupancy_snapshot> snaps;
    std::atomic<bool> stop{false};
    std::thread snapshotter([&] {
        while (!stop.load())
            snaps.push_back(buf.snapshot());
    });
    auto cand = stream(20);
    auto evict = stream(21);
    for (int round = 0; round < 2000; ++round) {
        mini_batch m;
        for (int i = 0; i < 4; ++i)
            m.push_back(make_sample(static_cast<class_id>((round + i) % 4),
                                    static_cast<float>(round)));
        buf.update_buffer(m, 2, cand, evict);
    }
    stop.store(true);
    snapshotter.join();
    snaps.push_back(buf.snapshot());

    // Replay the ordered log single-threaded; a snapshot at version v must
    // show exactly the occupancies after v mutations.
    const auto log = buf.mutation_log();
    std::map<std::uint64_t, std::vector<std::uint32_t>> state_at;
    std::vector<std::uint32_t> occ(4, 0);
    state_at[0] = occ;
    for (std::size_t v = 0; v < log.size(); ++v) {
        if (log[v].kind == 'a')
            ++occ[log[v].cls];
        state_at[v + 1] = occ;
    }
    for (const auto& snap : snaps) {
        REQUIRE(state_at.count(snap.version));
        CHECK(snap.per_class == state_at[snap.version]);
    }
}

TEST_CASE("snapshots start empty and track per-class inserts") {
    rehearsal_buffer buf(4, 8);
    const auto empty = buf.snapshot();
    CHECK(empty.per_class == std::vector<std::uint32_t>{0, 0, 0, 0});
    CHECK(empty.version == 0);
    CHECK(empty.total() == 0);

    auto cand = stream(24);
    auto evict = stream(25);
    buf.update_buffer(fresh_batch(3, 2), 3, cand, evict);
    const auto snap = buf.snapshot();
    CHECK(snap.per_class == std::vector<std::uint32_t>{0, 0, 3, 0});
    CHECK(snap.version == 3);
}

TEST_CASE("insertion reports account appends and replacements per class") {
    rehearsal_buffer buf(2, 2);
    auto cand = stream(22);
    auto evict = stream(23);
    const auto r1 = buf.update_buffer(fresh_batch(2, 0), 2, cand, evict);
    CHECK(r1.per_class.at(0).appends == 2);
    const auto r2 = buf.update_buffer(fresh_batch(3, 0, 10.0f), 3, cand, evict);
    CHECK(r2.per_class.at(0).appends == 0);
    CHECK(r2.per_class.at(0).replacements == 3);
    CHECK(buf.snapshot().version == 5);
}
