#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace gcmr {

// SplitMix64 finalizer. Pure function, identical on every platform.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Folds a list of tags into a child seed: derive_seed(s, {a, b}) = mix(mix(s ^ a') ^ b').
// Used to split one run seed into independent per-epoch / per-example streams.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

// Counter-based generator: draw i is mix64(key + i * golden_gamma), with key = mix64(seed).
// Any (seed, draw index) pair maps to the same value everywhere, and streams are split with derive_seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix64(seed)) {}

    std::uint64_t next_u64() {
        ++counter_;
        return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), rejection sampled so there is no modulo bias.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal();

    template <class T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace gcmr
