#include "scenario/dataset.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace drb {

namespace {

constexpr std::array<char, 4> k_magic = {'D', 'R', 'D', 'S'};
constexpr std::uint16_t k_version = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
    std::uint8_t bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in, const std::string& path) {
    std::uint8_t bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw io_error("truncated dataset file: " + path);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return static_cast<T>(v);
}

} // namespace

sample dataset::get(std::size_t index) const {
    sample s;
    s.label = labels[index];
    const auto base = features.begin() + static_cast<std::ptrdiff_t>(index * feature_dim);
    s.features.assign(base, base + feature_dim);
    return s;
}

std::vector<std::size_t> dataset::train_indices_of(const std::vector<class_id>& classes) const {
    std::unordered_set<class_id> wanted(classes.begin(), classes.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < train_count; ++i)
        if (wanted.count(labels[i]))
            out.push_back(i);
    return out;
}

std::vector<std::size_t> dataset::eval_indices_of(const std::vector<class_id>& classes) const {
    std::unordered_set<class_id> wanted(classes.begin(), classes.end());
    std::vector<std::size_t> out;
    for (std::size_t i = train_count; i < size(); ++i)
        if (wanted.count(labels[i]))
            out.push_back(i);
    return out;
}

mini_batch dataset::gather(const std::vector<std::size_t>& indices) const {
    mini_batch batch;
    batch.reserve(indices.size());
    for (const auto i : indices)
        batch.push_back(get(i));
    return batch;
}

void write_dataset(const dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error("cannot write dataset file: " + path);
    out.write(k_magic.data(), k_magic.size());
    write_le<std::uint16_t>(out, k_version);
    write_le<std::uint64_t>(out, data.size());
    write_le<std::uint32_t>(out, data.feature_dim);
    write_le<std::uint32_t>(out, data.n_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::uint32_t f = 0; f < data.feature_dim; ++f) {
            std::uint32_t bits;
            std::memcpy(&bits, &data.features[i * data.feature_dim + f], sizeof bits);
            write_le<std::uint32_t>(out, bits);
        }
        write_le<std::uint32_t>(out, data.labels[i]);
    }
    if (!out)
        throw io_error("short write on dataset file: " + path);
    out.close();

    std::ofstream split(path + ".split", std::ios::trunc);
    if (!split)
        throw io_error("cannot write split sidecar: " + path + ".split");
    split << "train " << data.train_count << "\n";
    split << "eval " << data.eval_count << "\n";
}

dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open dataset file: " + path);
    std::array<char, 4> magic;
    if (!in.read(magic.data(), magic.size()) || magic != k_magic)
        throw io_error("not a dataset file (bad magic): " + path);
    const auto version = read_le<std::uint16_t>(in, path);
    if (version != k_version)
        throw io_error("unsupported dataset version " + std::to_string(version) + ": " + path);
    dataset data;
    const auto count = read_le<std::uint64_t>(in, path);
    data.feature_dim = read_le<std::uint32_t>(in, path);
    data.n_classes = read_le<std::uint32_t>(in, path);
    data.features.resize(count * data.feature_dim);
    data.labels.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        for (std::uint32_t f = 0; f < data.feature_dim; ++f) {
            const auto bits = read_le<std::uint32_t>(in, path);
            std::memcpy(&data.features[i * data.feature_dim + f], &bits, sizeof bits);
        }
        data.labels[i] = read_le<std::uint32_t>(in, path);
        if (data.labels[i] >= data.n_classes)
            throw io_error("dataset label out of range at record " + std::to_string(i) + ": " +
                           path);
    }

    std::ifstream split(path + ".split");
    if (split) {
        std::string key;
        std::size_t train = 0, eval = 0;
        if (!(split >> key >> train) || key != "train" || !(split >> key >> eval) ||
            key != "eval" || train + eval != count)
            throw io_error("bad split sidecar: " + path + ".split");
        data.train_count = train;
        data.eval_count = eval;
    } else {
        data.train_count = count;
        data.eval_count = 0;
    }
    return data;
}

dataset synth_dataset(std::uint32_t n_classes, std::uint32_t per_class,
                      std::uint32_t feature_dim, double separation, std::uint64_t seed) {
    if (!(separation > 0.0))
        throw config_error("synth_dataset: separation must be > 0");
    rng_stream rng(seed, 0, rng_stream::purpose::synth);

    // Random mean directions, then a global rescale so the closest pair sits
    // exactly at `separation` or farther.
    std::vector<std::vector<double>> means(n_classes, std::vector<double>(feature_dim));
    double min_dist = 0.0;
    do {
        for (auto& mean : means)
            for (auto& v : mean)
                v = rng.gaussian();
        min_dist = std::numeric_limits<double>::infinity();
        for (std::uint32_t a = 0; a < n_classes; ++a) {
            for (std::uint32_t b = a + 1; b < n_classes; ++b) {
                double d2 = 0.0;
                for (std::uint32_t f = 0; f < feature_dim; ++f) {
                    const double diff = means[a][f] - means[b][f];
                    d2 += diff * diff;
                }
                min_dist = std::min(min_dist, std::sqrt(d2));
            }
        }
    } while (n_classes > 1 && min_dist <= 1e-9);
    if (n_classes > 1) {
        // Normalize so the closest pair sits exactly at `separation`; the
        // knob then controls hardness in both directions.
        const double scale = separation / min_dist;
        for (auto& mean : means)
            for (auto& v : mean)
                v *= scale;
    }

    const std::uint32_t eval_per_class = per_class / 5; // 80/20 split
    const std::uint32_t train_per_class = per_class - eval_per_class;

    dataset data;
    data.feature_dim = feature_dim;
    data.n_classes = n_classes;
    data.train_count = static_cast<std::size_t>(train_per_class) * n_classes;
    data.eval_count = static_cast<std::size_t>(eval_per_class) * n_classes;
    data.features.reserve((data.train_count + data.eval_count) * feature_dim);
    data.labels.reserve(data.train_count + data.eval_count);

    // Round-robin over classes inside each block keeps both blocks balanced.
    auto emit_block = [&](std::uint32_t rows) {
        for (std::uint32_t row = 0; row < rows; ++row) {
            for (std::uint32_t c = 0; c < n_classes; ++c) {
                for (std::uint32_t f = 0; f < feature_dim; ++f)
                    data.features.push_back(
                        static_cast<float>(means[c][f] + rng.gaussian()));
                data.labels.push_back(c);
            }
        }
    };
    emit_block(train_per_class);
    emit_block(eval_per_class);
    return data;
}

} // namespace drb
