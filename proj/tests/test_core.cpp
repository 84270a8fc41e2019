#include "core/capacity.hpp"
#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

using namespace drb;

TEST_CASE("per-class capacity floors the even division") {
    CHECK(per_class_capacity(100, 10) == 10);
    CHECK(per_class_capacity(1000, 1000) == 1);
    CHECK(per_class_capacity(105, 10) == 10);
    CHECK_THROWS_AS(per_class_capacity(9, 10), config_error);
    CHECK_THROWS_AS(per_class_capacity(100, 0), config_error);
}

TEST_CASE("aggregate capacity scales the floored per-class slot count") {
    CHECK(aggregate_class_capacity(4, 100, 10) == 40);
    CHECK(aggregate_class_capacity(1, 100, 10) == 10);
    // floor-before-multiply: 16 * floor(22500/1000), not floor(16*22500/1000)
    CHECK(aggregate_class_capacity(16, 22500, 1000) == 16 * (22500 / 1000));
    CHECK(aggregate_class_capacity(16, 22500, 1000) == 352);
}

TEST_CASE("capacity arithmetic is monotone in N and S_max") {
    for (std::size_t s = 10; s < 200; s += 7)
        for (std::size_t n = 1; n < 6; ++n) {
            CHECK(aggregate_class_capacity(n + 1, s, 10) >= aggregate_class_capacity(n, s, 10));
            CHECK(aggregate_class_capacity(n, s + 13, 10) >= aggregate_class_capacity(n, s, 10));
            CHECK(per_class_capacity(s + 13, 10) >= per_class_capacity(s, 10));
        }
}

TEST_CASE("buffer byte estimate matches the reported footprints") {
    // 1.2M samples at ~64222 raw bytes each: 30% ~ 23.12 GB, 2.5% ~ 1.93 GB.
    const std::uint64_t sample_bytes = 64222;
    const double gb = 1e9;
    CHECK(std::abs(estimate_buffer_bytes(0.30, 1200000, sample_bytes) / gb - 23.12) < 0.12);
    CHECK(std::abs(estimate_buffer_bytes(0.025, 1200000, sample_bytes) / gb - 1.93) < 0.01);
    CHECK(estimate_buffer_bytes(1.0, 100, 10) == 1000);
    CHECK_THROWS_AS(estimate_buffer_bytes(0.0, 100, 10), config_error);
    CHECK_THROWS_AS(estimate_buffer_bytes(1.5, 100, 10), config_error);
}

TEST_CASE("rng streams are reproducible per (seed, worker, purpose)") {
    rng_stream a(42, 3, rng_stream::purpose::eviction);
    rng_stream b(42, 3, rng_stream::purpose::eviction);
    for (int i = 0; i < 100; ++i)
        CHECK(a.next_u64() == b.next_u64());

    rng_stream c(42, 3, rng_stream::purpose::candidate_selection);
    rng_stream d(42, 4, rng_stream::purpose::eviction);
    rng_stream e(43, 3, rng_stream::purpose::eviction);
    std::set<std::uint64_t> firsts{rng_stream(42, 3, rng_stream::purpose::eviction).next_u64(),
                                   c.next_u64(), d.next_u64(), e.next_u64()};
    CHECK(firsts.size() == 4); // distinct streams diverge immediately
}

TEST_CASE("bounded draws cover the range without bias artifacts") {
    rng_stream rng(7, 0, rng_stream::purpose::global_sampling);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 100000; ++i) {
        const auto v = rng.bounded(10);
        REQUIRE(v < 10);
        ++counts[v];
    }
    for (const int c : counts)
        CHECK(std::abs(c - 10000) < 4 * std::sqrt(10000.0 * 0.9)); // ~4 sigma
}

TEST_CASE("gaussian moments are sane") {
    rng_stream rng(11, 0, rng_stream::purpose::model_init);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum2 += g * g;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("config files round-trip through the documented keys") {
    run_config cfg;
    cfg.n_workers = 4;
    cfg.n_classes = 12;
    cfg.lr.milestones = {{6, 0.5}, {8, 0.1}};
    cfg.mode = run_mode::from_scratch;
    cfg.dataset_path = "/tmp/x.bin";
    const std::string path = "/tmp/drb_test_config.conf";
    write_config_file(cfg, path);
    const run_config loaded = load_config_file(path);
    for (const auto& [key, _] : config_keys())
        CHECK(get_config_key(loaded, key) == get_config_key(cfg, key));
    std::remove(path.c_str());
}

TEST_CASE("unknown keys and bad values are rejected") {
    run_config cfg;
    CHECK_THROWS_AS(set_config_key(cfg, "bogus_key", "1"), config_error);
    CHECK_THROWS_AS(set_config_key(cfg, "n_workers", "three"), config_error);
    CHECK_THROWS_AS(set_config_key(cfg, "mode", "sideways"), config_error);
    CHECK_THROWS_AS(set_config_key(cfg, "lr_milestones", "abc"), config_error);
}

TEST_CASE("validation enforces the structural invariants") {
    run_config cfg;
    cfg.n_classes = 10;
    cfg.n_tasks = 4;
    cfg.batch_size = 56;
    cfg.candidate_count = 14;
    CHECK_NOTHROW(validate(cfg)); // near-equal tasks are allowed (10 / 4)

    run_config bad = cfg;
    bad.candidate_count = 57;
    CHECK_THROWS_AS(validate(bad), config_error);

    bad = cfg;
    bad.n_tasks = 11;
    CHECK_THROWS_AS(validate(bad), config_error);

    bad = cfg;
    bad.per_worker_capacity = 5; // below one slot per class
    CHECK_THROWS_AS(validate(bad), config_error);

    bad = cfg;
    bad.per_worker_capacity = 0;
    bad.buffer_fraction = 0.0;
    CHECK_THROWS_AS(validate(bad), config_error);
}

TEST_CASE("capacity resolution from the buffer fraction") {
    run_config cfg;
    cfg.n_classes = 10;
    cfg.n_workers = 2;
    cfg.buffer_fraction = 0.30;
    CHECK(cfg.resolve_capacity(4000) == 600); // round(0.3*4000)/2
    cfg.per_worker_capacity = 123;
    CHECK(cfg.resolve_capacity(4000) == 123); // explicit capacity wins
}

TEST_CASE("roster parsing validates ids and addresses") {
    const auto roster = parse_roster_lines({"1 127.0.0.1:9002", "0 127.0.0.1:9001", "# note"});
    REQUIRE(roster.size() == 2);
    CHECK(roster[0].id == 0);
    CHECK(roster[0].port == 9001);
    CHECK(roster[1].port == 9002);
    CHECK_THROWS_AS(parse_roster_lines({"0 127.0.0.1:1", "2 127.0.0.1:2"}), config_error);
    CHECK_THROWS_AS(parse_roster_lines({"0 127.0.0.1"}), config_error);
}

TEST_CASE("effective top-k follows the desk-scale rule") {
    run_config cfg;
    cfg.n_classes = 10;
    CHECK(cfg.effective_topk() == 5);
    cfg.n_classes = 9;
    CHECK(cfg.effective_topk() == 1);
    cfg.eval_topk = 3;
    CHECK(cfg.effective_topk() == 3);
}
