#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "taskres/gradients.hpp"

namespace taskres {

/// Warmup-then-cosine learning-rate schedule, resolved once per epoch:
/// epochs below warmup_epochs run at warmup_lr, afterwards
///   lr(e) = base_lr · 0.5 · (1 + cos(π · (e − warmup) / (total − warmup))).
struct LrSchedule {
    double base_lr = 2e-3;
    double warmup_lr = 1e-5;
    std::size_t warmup_epochs = 1;
    std::size_t total_epochs = 100;

    double lr_at(std::size_t epoch) const;
};

/// Adam with bias correction. One state instance owns the first/second
/// moment buffers for a fixed set of named parameter arrays; step_count
/// advances once per apply().
class AdamState {
  public:
    AdamState(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

    /// θ ← θ − lr·m̂/(√v̂ + ε) for every bound parameter set. Gradient map
    /// keys must exactly match the binding names.
    void apply(std::vector<ParamBinding>& params,
               const std::map<std::string, std::vector<double>>& grads, double lr);

    std::size_t step_count() const { return step_count_; }

  private:
    double beta1_;
    double beta2_;
    double epsilon_;
    std::size_t step_count_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

}  // namespace taskres
