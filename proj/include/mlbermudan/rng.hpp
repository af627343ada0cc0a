#pragma once

// Counter-based random streams. Every (seed, purpose, level, repetition, path)
// tuple maps to its own generator, so results never depend on thread layout.

#include <cstdint>
#include <limits>

namespace mlb {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
    return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

enum class Purpose : std::uint64_t { training = 1, testing = 2, reference = 3, auxiliary = 4 };

/// Identifies a family of per-path streams. Training and testing keys differ
/// in `purpose`, which keeps the two sample sets independent.
struct StreamKey {
    std::uint64_t seed = 0;
    Purpose purpose = Purpose::training;
    std::uint64_t level = 0;
    std::uint64_t repetition = 0;

    constexpr StreamKey with_purpose(Purpose p) const noexcept { return {seed, p, level, repetition}; }
    constexpr StreamKey with_level(std::uint64_t l) const noexcept { return {seed, purpose, l, repetition}; }
    constexpr StreamKey with_repetition(std::uint64_t r) const noexcept { return {seed, purpose, level, r}; }

    constexpr std::uint64_t id() const noexcept {
        std::uint64_t h = splitmix64(seed);
        h = hash_combine(h, static_cast<std::uint64_t>(purpose));
        h = hash_combine(h, level);
        return hash_combine(h, repetition);
    }
};

/// SplitMix64 as a UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

inline CounterRng path_stream(const StreamKey& key, std::uint64_t path) noexcept {
    return CounterRng(hash_combine(key.id(), path));
}

} // namespace mlb
