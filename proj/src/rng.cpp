#include "taskres/rng.hpp"

#include <cmath>

namespace taskres {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::uint64_t SplitMix64::next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::next_unit() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

double SplitMix64::next_gaussian() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double SplitMix64::next_symmetric(double bound) {
    return bound * (2.0 * next_unit() - 1.0);
}

std::uint64_t SplitMix64::next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

SplitMix64 SplitMix64::stream(std::uint64_t seed, std::uint64_t purpose) {
    SplitMix64 master(seed);
    std::uint64_t sub = 0;
    for (std::uint64_t i = 0; i <= purpose; ++i) sub = master.next();
    return SplitMix64(sub);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return SplitMix64(SplitMix64(a).next() ^ b).next();
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

}  // namespace taskres
