#pragma once

#include <cstdint>

namespace taskres {

/// SplitMix64 generator (Steele, Lea & Flood). This is the PRNG named in the
/// bundle format doc: synthetic bundles are a pure function of (spec, seed)
/// and any implementation of this exact algorithm reproduces them.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform double in (0, 1]: ((next() >> 11) + 1) * 2^-53.
    double next_unit();

    /// Standard normal via Box-Muller, cosine branch only:
    /// sqrt(-2 ln u1) * cos(2π u2). One call consumes two uniforms.
    double next_gaussian();

    /// Uniform double in [-bound, +bound].
    double next_symmetric(double bound);

    /// Unbiased integer in [0, n), n >= 1, by rejection sampling.
    std::uint64_t next_below(std::uint64_t n);

    /// Purpose-split substream: a master SplitMix64 seeded with `seed` is
    /// advanced `purpose + 1` times and its last output seeds the stream.
    static SplitMix64 stream(std::uint64_t seed, std::uint64_t purpose);

  private:
    std::uint64_t state_;
};

/// Deterministic seed mixing for internal streams (episode sampling, batch
/// shuffles, weight init). Not part of the on-disk format contract.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace taskres
