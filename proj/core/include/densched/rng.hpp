#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "densched/errors.hpp"

namespace densched {

// 64-bit FNV-1a, used both for hashing sample ids into stream keys and for
// the dataset digest. Fully specified, stable across platforms.
inline constexpr std::uint64_t kFnv64Offset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnv64Prime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t state = kFnv64Offset) noexcept {
    std::uint64_t h = state;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnv64Prime;
    }
    return h;
}

// splitmix64 finalizer. Scrambles seeds and decorrelates derived stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// xoshiro256** with hand-rolled uniform mappings. The <random> engines would
// do, but the standard *distributions* are implementation-defined, and this
// project promises byte-identical artifacts for a given seed on any
// toolchain, so every random draw below is pinned down to the bit.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) noexcept {
        // Expand the seed through splitmix64 so nearby seeds give unrelated
        // state, and avoid the all-zero state xoshiro cannot leave.
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s += 0x9e3779b97f4a7c15ULL;
            word = mix64(s);
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
            state_[0] = kFnv64Offset;
        }
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1), 53 significant bits.
    double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) noexcept { return next_double() < p; }

    // Uniform integer in [0, bound), rejection-sampled so every value is
    // exactly equally likely.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw ArgumentError("next_below: bound must be positive");
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), returned ascending.
    std::vector<std::uint32_t> sample_indices(std::uint32_t n, std::uint32_t k);

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

inline std::vector<std::uint32_t> RngStream::sample_indices(std::uint32_t n,
                                                            std::uint32_t k) {
    if (k > n) throw ArgumentError("sample_indices: k exceeds population size");
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    for (std::uint32_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::uint32_t>(next_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// Stream derivation: (global seed, sample id, draw index) -> independent
// stream. Workers processing disjoint samples get disjoint streams, which is
// what makes --jobs N output order- and count-independent.
inline RngStream derive_stream(std::uint64_t global_seed, std::uint64_t key,
                               std::uint64_t draw_index) noexcept {
    std::uint64_t s = mix64(global_seed);
    s = mix64(s ^ key);
    s = mix64(s ^ draw_index);
    return RngStream(s);
}

inline RngStream derive_stream(std::uint64_t global_seed, std::string_view sample_id,
                               std::uint64_t draw_index) noexcept {
    return derive_stream(global_seed, fnv1a64(sample_id), draw_index);
}

}  // namespace densched
