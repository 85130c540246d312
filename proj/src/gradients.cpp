#include "taskres/gradients.hpp"

#include <cmath>

#include "taskres/errors.hpp"

namespace taskres {

namespace {

constexpr double kZeroNormTolerance = 1e-12;
constexpr double kLogClamp = 1e-300;

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* row = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) sums[j] += row[j];
    }
    return sums;
}

void check_finite(const std::string& name, std::span<const double> values) {
    if (!all_finite(values)) {
        throw NumericError("non-finite gradient for parameter set '" + name + "'");
    }
}

/// Backprop of v̂ = v/‖v‖:  dL/dv = (dL/dv̂ − (v̂·dL/dv̂)·v̂)/‖v‖.
void normalization_backward(std::span<const double> v_hat, double norm,
                            std::span<const double> d_hat, std::span<double> d_raw) {
    const double proj = dot(v_hat, d_hat);
    for (std::size_t j = 0; j < v_hat.size(); ++j) {
        d_raw[j] = (d_hat[j] - proj * v_hat[j]) / norm;
    }
}

struct AdapterBackwardResult {
    Matrix d_w1;
    Matrix d_w2;
    std::vector<double> d_b1;
    std::vector<double> d_b2;
    Matrix d_input;  // gradient w.r.t. the adapter's input matrix
};

AdapterBackwardResult adapter_backward(const Matrix& input, const AdapterWeights& w,
                                       const Matrix& pre_activation, const Matrix& hidden,
                                       const Matrix& d_phi) {
    AdapterBackwardResult r;
    r.d_w2 = matmul_at_b(hidden, d_phi);
    if (w.kind == AdapterKind::kLinearBias) r.d_b2 = column_sums(d_phi);

    Matrix d_hidden = matmul_a_bt(d_phi, w.w2);
    if (w.kind == AdapterKind::kRelu) {
        for (std::size_t i = 0; i < d_hidden.data.size(); ++i) {
            if (pre_activation.data[i] <= 0.0) d_hidden.data[i] = 0.0;
        }
    }
    r.d_w1 = matmul_at_b(input, d_hidden);
    if (w.kind == AdapterKind::kLinearBias) r.d_b1 = column_sums(d_hidden);
    r.d_input = matmul_a_bt(d_hidden, w.w1);
    return r;
}

}  // namespace

std::vector<ParamBinding> tunable_params(TargetClassifierSpec& spec) {
    std::vector<ParamBinding> out;
    if (spec.construction == Construction::kTaskRes && spec.residual) {
        auto& res = *spec.residual;
        out.push_back({param_names::kResidual, res.values.data.data(), res.values.data.size()});
        if (res.alpha_mode == AlphaMode::kLearnable) {
            out.push_back({param_names::kAlphaRaw, &res.alpha_raw, 1});
        }
    }
    if ((spec.construction == Construction::kDirectAdapter ||
         spec.construction == Construction::kAdapterStyle) &&
        spec.adapter) {
        auto& w = *spec.adapter;
        out.push_back({param_names::kAdapterW1, w.w1.data.data(), w.w1.data.size()});
        out.push_back({param_names::kAdapterW2, w.w2.data.data(), w.w2.data.size()});
        if (w.kind == AdapterKind::kLinearBias) {
            out.push_back({param_names::kAdapterB1, w.bias1.data(), w.bias1.size()});
            out.push_back({param_names::kAdapterB2, w.bias2.data(), w.bias2.size()});
        }
    }
    if (spec.projection) {
        auto& p = spec.projection->p;
        out.push_back({param_names::kProjection, p.data.data(), p.data.size()});
    }
    if (spec.image_residual) {
        auto& r = *spec.image_residual;
        out.push_back({param_names::kImageResidual, r.values.data(), r.values.size()});
    }
    return out;
}

double cross_entropy_loss(const Matrix& probs, const std::vector<std::int32_t>& labels) {
    if (labels.size() != probs.rows) {
        throw ValidationError("cross_entropy_loss: label count != probability rows");
    }
    double total = 0.0;
    for (std::size_t n = 0; n < probs.rows; ++n) {
        const std::int32_t y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols) {
            throw ValidationError("cross_entropy_loss: label " + std::to_string(y) +
                                  " out of range at row " + std::to_string(n));
        }
        total -= std::log(std::max(probs.at(n, static_cast<std::size_t>(y)), kLogClamp));
    }
    return total / static_cast<double>(probs.rows);
}

LossAndGrads loss_and_grads(const LabeledEmbeddings& batch, const Matrix& base,
                            const TargetClassifierSpec& spec, double temperature) {
    validate_spec(base, spec);
    if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
    const std::size_t num_samples = batch.embeddings.rows;
    if (num_samples == 0) throw ValidationError("loss_and_grads: empty batch");
    if (batch.labels.size() != num_samples) {
        throw ValidationError("loss_and_grads: label count != batch rows");
    }
    const std::size_t num_classes = base.rows;
    const std::size_t dim = base.cols;
    if (batch.embeddings.cols != dim) {
        throw ValidationError("loss_and_grads: batch dim != base dim");
    }
    for (std::int32_t y : batch.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ValidationError("loss_and_grads: label " + std::to_string(y) + " out of range");
        }
    }

    // ---- forward ----
    const Matrix effective = spec.projection ? matmul(base, spec.projection->p) : base;

    const bool has_adapter = spec.construction == Construction::kDirectAdapter ||
                             spec.construction == Construction::kAdapterStyle;
    Matrix pre_activation;  // K×H, before nonlinearity (with bias1 if any)
    Matrix hidden;          // K×H, after nonlinearity
    Matrix phi;             // K×D
    if (has_adapter) {
        const auto& w = *spec.adapter;
        pre_activation = matmul(effective, w.w1);
        if (w.kind == AdapterKind::kLinearBias) {
            for (std::size_t i = 0; i < pre_activation.rows; ++i) {
                auto row = pre_activation.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] += w.bias1[j];
            }
        }
        hidden = pre_activation;
        if (w.kind == AdapterKind::kRelu) {
            for (double& v : hidden.data) v = std::max(v, 0.0);
        }
        phi = matmul(hidden, w.w2);
        if (w.kind == AdapterKind::kLinearBias) {
            for (std::size_t i = 0; i < phi.rows; ++i) {
                auto row = phi.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] += w.bias2[j];
            }
        }
    }

    Matrix t_prime = effective;
    switch (spec.construction) {
        case Construction::kBase:
            break;
        case Construction::kTaskRes: {
            const double a = spec.residual->effective_alpha();
            const auto& x = spec.residual->values;
            for (std::size_t i = 0; i < t_prime.data.size(); ++i) t_prime.data[i] += a * x.data[i];
            break;
        }
        case Construction::kDirectAdapter:
            t_prime = phi;
            break;
        case Construction::kAdapterStyle: {
            const double a = spec.adapter->alpha;
            for (std::size_t i = 0; i < t_prime.data.size(); ++i) t_prime.data[i] += a * phi.data[i];
            break;
        }
    }

    Matrix t_hat = t_prime;
    std::vector<double> t_norms(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) {
        const double norm = norm2(t_prime.row(i));
        if (norm <= kZeroNormTolerance) {
            throw NumericError("zero-norm classifier row " + std::to_string(i) + " in training");
        }
        t_norms[i] = norm;
        auto row = t_hat.row(i);
        for (double& v : row) v /= norm;
    }

    const bool has_image_residual = spec.image_residual.has_value();
    const double image_alpha = spec.image_alpha();

    // z' per sample (z plus scaled image residual), normalized
    Matrix z_hat(num_samples, dim);
    std::vector<double> z_norms(num_samples);
    for (std::size_t n = 0; n < num_samples; ++n) {
        const auto z = batch.embeddings.row(n);
        auto out = z_hat.row(n);
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] = has_image_residual ? z[j] + image_alpha * spec.image_residual->values[j] : z[j];
        }
        const double norm = norm2(out);
        if (norm <= kZeroNormTolerance) {
            throw NumericError("zero-norm embedding row " + std::to_string(n) + " in training");
        }
        z_norms[n] = norm;
        for (double& v : out) v /= norm;
    }

    // probabilities, loss, and dL/dlogits scaled by 1/τ
    const double inv_batch = 1.0 / static_cast<double>(num_samples);
    Matrix logit_grads(num_samples, num_classes);  // g[n][i] = (p - onehot)/(B·τ)
    double loss = 0.0;
    std::vector<double> logits(num_classes);
    for (std::size_t n = 0; n < num_samples; ++n) {
        const auto z = z_hat.row(n);
        for (std::size_t i = 0; i < num_classes; ++i) {
            logits[i] = dot(z, t_hat.row(i)) / temperature;
        }
        const std::vector<double> probs = softmax(logits);
        const auto y = static_cast<std::size_t>(batch.labels[n]);
        loss -= std::log(std::max(probs[y], kLogClamp));
        auto grow = logit_grads.row(n);
        for (std::size_t i = 0; i < num_classes; ++i) {
            grow[i] = (probs[i] - (i == y ? 1.0 : 0.0)) * inv_batch / temperature;
        }
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");

    // ---- backward ----
    // dL/dt̂ accumulated over samples in index order, then the normalization
    // Jacobian once per classifier row (t' is shared across the batch).
    Matrix d_t_hat(num_classes, dim, 0.0);
    for (std::size_t n = 0; n < num_samples; ++n) {
        const auto z = z_hat.row(n);
        const auto g = logit_grads.row(n);
        for (std::size_t i = 0; i < num_classes; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            auto acc = d_t_hat.row(i);
            for (std::size_t j = 0; j < dim; ++j) acc[j] += gi * z[j];
        }
    }
    Matrix d_t_prime(num_classes, dim);
    for (std::size_t i = 0; i < num_classes; ++i) {
        normalization_backward(t_hat.row(i), t_norms[i], d_t_hat.row(i), d_t_prime.row(i));
    }

    LossAndGrads result;
    result.loss = loss;

    // image-side chain: dL/dẑ per sample, through the sample's normalization
    std::vector<double> d_image_residual;
    double d_alpha_image = 0.0;
    if (has_image_residual) {
        d_image_residual.assign(dim, 0.0);
        std::vector<double> d_z_hat(dim);
        std::vector<double> d_z_raw(dim);
        for (std::size_t n = 0; n < num_samples; ++n) {
            const auto g = logit_grads.row(n);
            std::fill(d_z_hat.begin(), d_z_hat.end(), 0.0);
            for (std::size_t i = 0; i < num_classes; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                const auto t_row = t_hat.row(i);
                for (std::size_t j = 0; j < dim; ++j) d_z_hat[j] += gi * t_row[j];
            }
            normalization_backward(z_hat.row(n), z_norms[n], d_z_hat, d_z_raw);
            for (std::size_t j = 0; j < dim; ++j) {
                d_image_residual[j] += image_alpha * d_z_raw[j];
                d_alpha_image += spec.image_residual->values[j] * d_z_raw[j];
            }
        }
    }

    // construction chain
    Matrix d_effective;
    double d_alpha_text = 0.0;
    switch (spec.construction) {
        case Construction::kBase:
            d_effective = d_t_prime;
            break;
        case Construction::kTaskRes: {
            const auto& res = *spec.residual;
            const double a = res.effective_alpha();
            std::vector<double> d_x(res.values.data.size());
            for (std::size_t i = 0; i < d_x.size(); ++i) {
                d_x[i] = a * d_t_prime.data[i];
                d_alpha_text += d_t_prime.data[i] * res.values.data[i];
            }
            result.grads[param_names::kResidual] = std::move(d_x);
            d_effective = d_t_prime;
            break;
        }
        case Construction::kDirectAdapter:
        case Construction::kAdapterStyle: {
            const auto& w = *spec.adapter;
            const bool is_style = spec.construction == Construction::kAdapterStyle;
            Matrix d_phi = d_t_prime;
            if (is_style) {
                for (double& v : d_phi.data) v *= w.alpha;
            }
            AdapterBackwardResult ab = adapter_backward(effective, w, pre_activation, hidden, d_phi);
            result.grads[param_names::kAdapterW1] = std::move(ab.d_w1.data);
            result.grads[param_names::kAdapterW2] = std::move(ab.d_w2.data);
            if (w.kind == AdapterKind::kLinearBias) {
                result.grads[param_names::kAdapterB1] = std::move(ab.d_b1);
                result.grads[param_names::kAdapterB2] = std::move(ab.d_b2);
            }
            d_effective = ab.d_input;
            if (is_style) {
                for (std::size_t i = 0; i < d_effective.data.size(); ++i) {
                    d_effective.data[i] += d_t_prime.data[i];
                }
            }
            break;
        }
    }

    if (spec.projection) {
        result.grads[param_names::kProjection] = matmul_at_b(base, d_effective).data;
    }

    if (spec.construction == Construction::kTaskRes &&
        spec.residual->alpha_mode == AlphaMode::kLearnable) {
        // TaskRes-I&T shares the residual's α on both sides
        double d_alpha = d_alpha_text;
        if (has_image_residual) d_alpha += d_alpha_image;
        const double a = spec.residual->effective_alpha();
        result.grads[param_names::kAlphaRaw] = {d_alpha * (1.0 - a * a)};
    }

    if (has_image_residual) {
        result.grads[param_names::kImageResidual] = std::move(d_image_residual);
    }

    for (const auto& [name, grad] : result.grads) check_finite(name, grad);
    return result;
}

}  // namespace taskres
