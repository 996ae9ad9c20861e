#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace corrdiff {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Hashes a seed and a path of stream indices (e.g. set index, replicate
/// index) into a 64-bit stream key.
constexpr std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t key = detail::mix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t component : path) {
        key = detail::mix64(key + detail::golden_gamma * (component + 1));
    }
    return key;
}

/// Counter-based generator: the i-th output is a bijective mix of
/// (key + i * gamma), so a stream is fully determined by its key and
/// independent of which thread consumes it. Satisfies
/// UniformRandomBitGenerator.
class StreamRng {
public:
    using result_type = std::uint64_t;

    explicit StreamRng(std::uint64_t key) noexcept : key_(key) {}
    StreamRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
        : key_(derive_key(seed, path)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::golden_gamma);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() {
        return normal_(*this);
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace corrdiff
