#include "taskres/optimizer.hpp"

#include <cmath>

#include "taskres/errors.hpp"

namespace taskres {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double LrSchedule::lr_at(std::size_t epoch) const {
    if (epoch >= total_epochs) {
        throw ValidationError("lr_at: epoch " + std::to_string(epoch) + " >= total_epochs " +
                              std::to_string(total_epochs));
    }
    if (epoch < warmup_epochs) return warmup_lr;
    const double span = static_cast<double>(total_epochs - warmup_epochs);
    const double progress = static_cast<double>(epoch - warmup_epochs) / span;
    return base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

void AdamState::apply(std::vector<ParamBinding>& params,
                      const std::map<std::string, std::vector<double>>& grads, double lr) {
    if (!(lr > 0.0)) throw ValidationError("adam_apply: lr must be > 0");
    if (params.size() != grads.size()) {
        throw ValidationError("adam_apply: gradient map does not match parameter bindings");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));

    for (auto& binding : params) {
        const auto it = grads.find(binding.name);
        if (it == grads.end()) {
            throw ValidationError("adam_apply: missing gradient for '" + binding.name + "'");
        }
        const std::vector<double>& g = it->second;
        if (g.size() != binding.size) {
            throw ValidationError("adam_apply: gradient shape mismatch for '" + binding.name + "'");
        }
        if (!all_finite(std::span<const double>(g))) {
            throw NumericError("adam_apply: non-finite gradient for '" + binding.name + "'");
        }

        auto& m = m_[binding.name];
        auto& v = v_[binding.name];
        if (m.empty()) {
            m.assign(binding.size, 0.0);
            v.assign(binding.size, 0.0);
        }

        double* theta = binding.data;
        for (std::size_t i = 0; i < binding.size; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
        }
    }
}

}  // namespace taskres
