#pragma once

#include <map>
#include <string>
#include <vector>

#include "taskres/classifier.hpp"
#include "taskres/embedding_io.hpp"
#include "taskres/matrix.hpp"

namespace taskres {

/// Mean cross-entropy (nats) plus exact gradients for every tunable
/// parameter set, keyed by name. Frozen sets are absent from the map.
struct LossAndGrads {
    double loss = 0.0;
    std::map<std::string, std::vector<double>> grads;
};

/// Canonical parameter-set names used by gradients, the optimizer state and
/// the parameter serialization.
namespace param_names {
inline constexpr const char* kResidual = "residual";
inline constexpr const char* kAlphaRaw = "alpha_raw";
inline constexpr const char* kAdapterW1 = "w1";
inline constexpr const char* kAdapterW2 = "w2";
inline constexpr const char* kAdapterB1 = "b1";
inline constexpr const char* kAdapterB2 = "b2";
inline constexpr const char* kProjection = "projection";
inline constexpr const char* kImageResidual = "image_residual";
}  // namespace param_names

/// A mutable view of one tunable parameter set inside a spec.
struct ParamBinding {
    std::string name;
    double* data;
    std::size_t size;
};

/// The tunable sets implied by the spec, in a fixed deterministic order:
/// residual and (in learnable mode) alpha_raw for TaskRes constructions;
/// w1/w2 (and biases for the linear-with-bias kind) for adapter
/// constructions; the projection and the image residual whenever present.
std::vector<ParamBinding> tunable_params(TargetClassifierSpec& spec);

/// −(1/N)·Σ log probs[i, labels[i]]; log arguments clamp at 1e-300.
double cross_entropy_loss(const Matrix& probs, const std::vector<std::int32_t>& labels);

/// Loss and exact analytic gradients of
///   cross_entropy ∘ softmax ∘ (cosine logits / τ) ∘ build_target_classifier
/// with respect to every tunable set. The chain runs through the L2
/// re-normalization of t' rows (and of z' when an image residual is
/// present); the normalization Jacobian (I − v̂v̂ᵀ)/‖v‖ is applied exactly.
/// Per-sample contributions accumulate in row order, so results are
/// bitwise reproducible.
LossAndGrads loss_and_grads(const LabeledEmbeddings& batch, const Matrix& base,
                            const TargetClassifierSpec& spec, double temperature);

}  // namespace taskres
