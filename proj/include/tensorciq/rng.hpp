#pragma once

#include <cstdint>

#include "tensorciq/normal.hpp"

namespace tensorciq {

// Counter-based randomness. Every draw is addressed by
// (stream tag, master seed, counter) through a SplitMix64 finalizer, so draws
// are independent of evaluation order, parallel-safe, and bit-reproducible
// across platforms. Gaussians come from the inverse CDF applied to the top
// 53 bits, never from an implementation-defined distribution object.

namespace rng {

// Stream tags (arbitrary fixed constants, one per independent sub-stream).
enum class Stream : std::uint64_t {
    factors = 0x66616374u,       // ground-truth factor entries
    mask = 0x6d61736bu,          // Bernoulli sampling of canonical triples
    weights = 0x77656967u,       // heteroscedasticity weights w_{i,j,k}
    noise = 0x6e6f6973u,         // Gaussian noise draws
    init = 0x696e6974u,          // spectral-init restart vectors
    entry_sample = 0x656e7472u,  // tracked-entry subset selection
    trial = 0x7472696cu,         // per-trial instance seeds
    refine = 0x72666e65u,        // per-trial estimator seeds
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, Stream stream, std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ counter);
}

// Derive an independent sub-seed (e.g. a per-trial seed).
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return mix(seed, stream, index);
}

// Uniform on the open interval (0, 1), 53-bit resolution.
inline double uniform(std::uint64_t seed, Stream stream, std::uint64_t counter) {
    const std::uint64_t bits = mix(seed, stream, counter) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// Standard normal draw at the given counter.
inline double gaussian(std::uint64_t seed, Stream stream, std::uint64_t counter) {
    return norm_ppf(uniform(seed, stream, counter));
}

}  // namespace rng
}  // namespace tensorciq
