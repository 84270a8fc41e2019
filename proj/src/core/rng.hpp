#pragma once

#include <cstdint>
#include <optional>

namespace drb {

/**
 * Counter-based seedable generator. Each stream is keyed by
 * (seed, worker, purpose, extra keys); identical keys yield identical draw
 * sequences on every platform, so candidate selection, eviction and global
 * sampling are independently reproducible.
 *
 * Streams are single-owner: one instance per purpose per thread.
 */
class rng_stream {
public:
    enum class purpose : std::uint32_t {
        candidate_selection = 1,
        eviction = 2,
        global_sampling = 3,
        data_shuffle = 4,
        model_init = 5,
        slot_substitute = 6,
        synth = 7,
    };

    rng_stream(std::uint64_t seed, std::uint32_t worker, purpose p);

    /// Substream for keyed derivations (e.g. per-(task, epoch) shuffles).
    static rng_stream keyed(std::uint64_t seed, std::uint32_t worker, purpose p,
                            std::uint64_t k1, std::uint64_t k2 = 0);

    std::uint64_t next_u64();

    /// Unbiased uniform draw in [0, n). n must be nonzero.
    std::uint64_t bounded(std::uint64_t n);

    /// Uniform in [0, 1).
    double next_double();

    /// Standard normal via Box-Muller; second value of each pair is cached.
    double gaussian();

private:
    rng_stream(std::uint64_t key_);

    std::uint64_t m_key;
    std::uint64_t m_counter = 0;
    std::optional<double> m_spare;
};

} // namespace drb
