#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "taskres/embedding_io.hpp"

namespace taskres {

/// Recipe for a synthetic embedding bundle with controllable domain shift.
/// Generation is a pure function of the spec: K true class directions are
/// drawn uniformly on the unit sphere, base row k is
/// normalize(true_k + shift·g_k) and each class-k image is
/// normalize(true_k + sample_noise·g). All randomness comes from SplitMix64
/// substreams split by purpose (directions / base noise / per-split sample
/// noise), so varying `shift` leaves every image payload bit-identical.
struct SynthSpec {
    std::size_t num_classes = 10;
    std::size_t dim = 32;
    std::size_t train_per_class = 16;
    std::size_t test_per_class = 100;
    double shift = 0.0;
    double sample_noise = 0.0;
    std::uint64_t seed = 0;
    // Softer than CLIP's ~0.01 so few-shot gradients stay informative at
    // small D; recorded in the generated manifest.
    double temperature = 0.05;
};

// Purpose indices of the generator's SplitMix64 substreams (format contract,
// documented with test vectors in docs/bundle_format.md).
inline constexpr std::uint64_t kSynthStreamDirections = 0;
inline constexpr std::uint64_t kSynthStreamBaseNoise = 1;
inline constexpr std::uint64_t kSynthStreamTrainNoise = 2;
inline constexpr std::uint64_t kSynthStreamTestNoise = 3;

Bundle generate(const SynthSpec& spec);

/// One bundle per shift, sharing the spec's seed: true directions and all
/// image draws are identical across the ladder, only the base classifier's
/// misalignment varies.
std::vector<Bundle> difficulty_ladder(const SynthSpec& base_spec, std::span<const double> shifts);

}  // namespace taskres
