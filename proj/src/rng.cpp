#include "anam/rng.hpp"

namespace anam {

std::uint64_t Rng::splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream)
    : seed_(splitmix64(splitmix64(master_seed) ^ splitmix64(stream + 1))), engine_(seed_) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

}  // namespace anam
