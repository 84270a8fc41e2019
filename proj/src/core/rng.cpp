#include "core/rng.hpp"

#include <cmath>

namespace drb {

namespace {

constexpr std::uint64_t k_golden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer; the core bijective mixer behind the stream.
std::uint64_t mix64(std::uint64_t z) {
    z += k_golden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t seed, std::uint64_t worker, std::uint64_t purpose,
                         std::uint64_t k1, std::uint64_t k2) {
    std::uint64_t key = mix64(seed);
    key = mix64(key ^ (worker * 0xd1342543de82ef95ULL));
    key = mix64(key ^ (purpose * 0xaf251af3b0f025b5ULL));
    key = mix64(key ^ k1);
    key = mix64(key ^ k2);
    return key;
}

} // namespace

rng_stream::rng_stream(std::uint64_t key_) : m_key(key_) {}

rng_stream::rng_stream(std::uint64_t seed, std::uint32_t worker, purpose p)
    : rng_stream(derive_key(seed, worker, static_cast<std::uint64_t>(p), 0, 0)) {}

rng_stream rng_stream::keyed(std::uint64_t seed, std::uint32_t worker, purpose p,
                             std::uint64_t k1, std::uint64_t k2) {
    return rng_stream(derive_key(seed, worker, static_cast<std::uint64_t>(p), k1 + 1, k2 + 1));
}

std::uint64_t rng_stream::next_u64() {
    return mix64(m_key ^ (++m_counter * k_golden));
}

std::uint64_t rng_stream::bounded(std::uint64_t n) {
    // Rejection sampling over the top of the range keeps the draw unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t v = next_u64();
        if (v >= threshold)
            return v % n;
    }
}

double rng_stream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double rng_stream::gaussian() {
    if (m_spare) {
        const double v = *m_spare;
        m_spare.reset();
        return v;
    }
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0)
        u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    m_spare = radius * std::sin(angle);
    return radius * std::cos(angle);
}

} // namespace drb
