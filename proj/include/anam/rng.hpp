#pragma once

#include <cstdint>
#include <random>

namespace anam {

// Seedable 64-bit generator. Every consumer (simulation, initialization,
// shuffling, ensemble members) gets its own stream derived from a master
// seed and a stream id:
//
//   engine seed = splitmix64(splitmix64(master) ^ splitmix64(stream + 1))
//
// so streams for different ids are statistically independent and each is
// reproducible on its own.
// Stream ids used by the library; callers pick their own above 1000.
namespace streams {
inline constexpr std::uint64_t simulate = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t shuffle = 4;
inline constexpr std::uint64_t ensemble = 5;
inline constexpr std::uint64_t pairs = 6;
}  // namespace streams

class Rng {
public:
    using engine_type = std::mt19937_64;
    using result_type = engine_type::result_type;

    explicit Rng(std::uint64_t master_seed, std::uint64_t stream = 0);

    static std::uint64_t splitmix64(std::uint64_t x) noexcept;

    // Independent child stream, deterministic in (this stream's seed, id).
    Rng split(std::uint64_t id) const { return Rng(seed_, id); }

    std::uint64_t seed() const noexcept { return seed_; }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();

    engine_type& engine() noexcept { return engine_; }

    // UniformRandomBitGenerator so it plugs into <random> and std::shuffle.
    static constexpr result_type min() { return engine_type::min(); }
    static constexpr result_type max() { return engine_type::max(); }
    result_type operator()() { return engine_(); }

private:
    std::uint64_t seed_;
    engine_type engine_;
};

}  // namespace anam
