#include "core/errors.hpp"
#include "scenario/dataset.hpp"
#include "scenario/schedule.hpp"
#include "trainer/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

using namespace drb;

TEST_CASE("schedules split the permuted classes into near-equal disjoint tasks") {
    SUBCASE("1000 classes over 4 tasks: 250 each") {
        const auto s = make_schedule(1000, 4, 5);
        REQUIRE(s.tasks.size() == 4);
        std::set<class_id> all;
        for (const auto& task : s.tasks) {
            CHECK(task.size() == 250);
            all.insert(task.begin(), task.end());
        }
        CHECK(all.size() == 1000); // disjoint cover of {0..K-1}
        CHECK(*all.rbegin() == 999);
    }
    SUBCASE("single task holds every class") {
        const auto s = make_schedule(10, 1, 5);
        CHECK(s.tasks[0].size() == 10);
    }
    SUBCASE("non-divisible K yields sizes within one") {
        const auto s = make_schedule(10, 4, 5);
        std::vector<std::size_t> sizes;
        for (const auto& task : s.tasks)
            sizes.push_back(task.size());
        CHECK(sizes == std::vector<std::size_t>{3, 3, 2, 2});
    }
    SUBCASE("same seed, same schedule; different seed, different permutation") {
        const auto a = make_schedule(64, 4, 9);
        const auto b = make_schedule(64, 4, 9);
        const auto c = make_schedule(64, 4, 10);
        CHECK(a.tasks == b.tasks);
        CHECK(a.tasks != c.tasks);
    }
    SUBCASE("T > K or T = 0 is a configuration error") {
        CHECK_THROWS_AS(make_schedule(4, 5, 1), config_error);
        CHECK_THROWS_AS(make_schedule(4, 0, 1), config_error);
    }
}

TEST_CASE("sharding partitions each epoch exactly once") {
    std::vector<std::size_t> task_data(1000);
    for (std::size_t i = 0; i < task_data.size(); ++i)
        task_data[i] = 10000 + i;

    SUBCASE("single worker sees the full shuffled task") {
        const auto batches = shard_batches(task_data, 0, 1, 56, 1, 0, 0);
        std::size_t total = 0;
        for (const auto& b : batches)
            total += b.size();
        CHECK(total == 1000);
    }

    SUBCASE("four workers get 250 samples each; union is the task, exactly once") {
        for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
            std::multiset<std::size_t> seen;
            for (worker_id w = 0; w < 4; ++w) {
                std::size_t shard_size = 0;
                for (const auto& b : shard_batches(task_data, w, 4, 56, 1, 0, epoch)) {
                    shard_size += b.size();
                    seen.insert(b.begin(), b.end());
                }
                CHECK(shard_size == 250);
            }
            CHECK(seen.size() == 1000);
            CHECK(std::multiset<std::size_t>(task_data.begin(), task_data.end()) == seen);
        }
    }

    SUBCASE("epochs reshuffle deterministically") {
        const auto e0a = shard_batches(task_data, 0, 2, 56, 1, 0, 0);
        const auto e0b = shard_batches(task_data, 0, 2, 56, 1, 0, 0);
        const auto e1 = shard_batches(task_data, 0, 2, 56, 1, 0, 1);
        CHECK(e0a == e0b);
        CHECK(e0a != e1);
    }

    SUBCASE("lockstep batch count is derivable locally and safe for all workers") {
        for (std::size_t task_size : {999, 1000, 1001, 113, 56, 57}) {
            std::vector<std::size_t> data(task_size);
            for (std::uint32_t n : {1u, 2u, 4u}) {
                const auto steps = lockstep_batches(task_size, n, 56);
                for (worker_id w = 0; w < n; ++w)
                    CHECK(shard_batches(data, w, n, 56, 1, 0, 0).size() >= steps);
            }
        }
    }
}

TEST_CASE("synthetic datasets are deterministic and well separated") {
    const auto a = synth_dataset(10, 50, 24, 3.0, 7);
    const auto b = synth_dataset(10, 50, 24, 3.0, 7);
    const auto c = synth_dataset(10, 50, 24, 3.0, 8);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.features != c.features); // same shape, different content
    CHECK(c.size() == a.size());

    CHECK(a.train_count == 400); // 80/20 split
    CHECK(a.eval_count == 100);
    // Both blocks balanced across classes.
    std::map<class_id, int> train_counts, eval_counts;
    for (std::size_t i = 0; i < a.train_count; ++i)
        ++train_counts[a.labels[i]];
    for (std::size_t i = a.train_count; i < a.size(); ++i)
        ++eval_counts[a.labels[i]];
    for (class_id k = 0; k < 10; ++k) {
        CHECK(train_counts[k] == 40);
        CHECK(eval_counts[k] == 10);
    }

    SUBCASE("empty per-class yields an empty dataset with a valid shape") {
        const auto empty = synth_dataset(4, 0, 8, 1.0, 1);
        CHECK(empty.size() == 0);
        CHECK(empty.feature_dim == 8);
    }
    SUBCASE("separation must be positive") {
        CHECK_THROWS_AS(synth_dataset(4, 10, 8, 0.0, 1), config_error);
    }
}

TEST_CASE("well-separated blobs are jointly learnable above 0.95 top-1") {
    const auto data = synth_dataset(10, 100, 16, 10.0, 3);
    mlp_model model(16, 32, 10);
    rng_stream init(3, 0, rng_stream::purpose::model_init);
    model.init(init);
    allreduce_op reduce(0, 1, nullptr);
    sgd_state sgd;

    std::vector<std::size_t> train_idx(data.train_count);
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        train_idx[i] = i;
    std::uint64_t seq = 1;
    for (int epoch = 0; epoch < 15; ++epoch)
        for (const auto& batch : shard_batches(train_idx, 0, 1, 56, 3, 0, epoch))
            train_step(model, data.gather(batch), 0.05, reduce, seq++, sgd);

    std::vector<std::size_t> eval_idx;
    for (std::size_t i = data.train_count; i < data.size(); ++i)
        eval_idx.push_back(i);
    CHECK(evaluate(model, data.gather(eval_idx), 1) > 0.95);
}

TEST_CASE("dataset files round-trip bit-exactly with their split sidecar") {
    const auto data = synth_dataset(5, 20, 6, 2.0, 11);
    const std::string path = "/tmp/drb_test_dataset.bin";
    write_dataset(data, path);
    const auto loaded = load_dataset(path);
    CHECK(loaded.feature_dim == data.feature_dim);
    CHECK(loaded.n_classes == data.n_classes);
    CHECK(loaded.train_count == data.train_count);
    CHECK(loaded.eval_count == data.eval_count);
    CHECK(loaded.labels == data.labels);
    REQUIRE(loaded.features.size() == data.features.size());
    CHECK(std::equal(loaded.features.begin(), loaded.features.end(), data.features.begin()));

    // Re-writing the loaded dataset reproduces identical bytes.
    const std::string path2 = "/tmp/drb_test_dataset2.bin";
    write_dataset(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
    const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(bytes1 == bytes2);

    for (const auto* p : {path.c_str(), path2.c_str()}) {
        std::remove(p);
        std::remove((std::string(p) + ".split").c_str());
    }
}

TEST_CASE("corrupt dataset files are io errors") {
    const std::string path = "/tmp/drb_test_bad.bin";
    std::ofstream(path, std::ios::binary) << "NOPE";
    CHECK_THROWS_AS(load_dataset(path), io_error);
    CHECK_THROWS_AS(load_dataset("/tmp/does_not_exist_drb.bin"), io_error);
    std::remove(path.c_str());
}

TEST_CASE("task index selectors honor the train/eval split") {
    const auto data = synth_dataset(6, 30, 4, 2.0, 13);
    const std::vector<class_id> classes{1, 4};
    const auto train = data.train_indices_of(classes);
    const auto eval = data.eval_indices_of(classes);
    CHECK(train.size() == 48); // 24 per class * 2
    CHECK(eval.size() == 12);
    for (const auto i : train) {
        CHECK(i < data.train_count);
        CHECK((data.labels[i] == 1 || data.labels[i] == 4));
    }
    for (const auto i : eval)
        CHECK(i >= data.train_count);
}
