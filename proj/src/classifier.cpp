#include "taskres/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "taskres/errors.hpp"

namespace taskres {

namespace {
constexpr double kZeroNormTolerance = 1e-12;

void check_shape(bool ok, const std::string& what) {
    if (!ok) throw ValidationError("shape mismatch: " + what);
}
}  // namespace

double TaskResidual::effective_alpha() const {
    return alpha_mode == AlphaMode::kFixed ? alpha : std::tanh(alpha_raw);
}

TaskResidual TaskResidual::zeros(std::size_t num_classes, std::size_t dim, double alpha) {
    TaskResidual r;
    r.values = Matrix(num_classes, dim, 0.0);
    r.alpha_mode = AlphaMode::kFixed;
    r.alpha = alpha;
    return r;
}

TaskResidual TaskResidual::zeros_learnable(std::size_t num_classes, std::size_t dim) {
    TaskResidual r;
    r.values = Matrix(num_classes, dim, 0.0);
    r.alpha_mode = AlphaMode::kLearnable;
    // tanh(raw) = 0.5 at init, continuous with the fixed-α default
    r.alpha_raw = std::atanh(0.5);
    return r;
}

EnhancedBaseProjection EnhancedBaseProjection::identity(std::size_t dim) {
    return EnhancedBaseProjection{Matrix::identity(dim)};
}

ImageResidual ImageResidual::zeros(std::size_t dim, double alpha) {
    return ImageResidual{std::vector<double>(dim, 0.0), alpha};
}

const char* construction_name(Construction c) {
    switch (c) {
        case Construction::kBase: return "base";
        case Construction::kDirectAdapter: return "direct_adapter";
        case Construction::kAdapterStyle: return "adapter_style";
        case Construction::kTaskRes: return "taskres";
    }
    return "?";
}

double TargetClassifierSpec::image_alpha() const {
    if (!image_residual) return 0.0;
    if (construction == Construction::kTaskRes && residual) return residual->effective_alpha();
    return image_residual->alpha;
}

void validate_spec(const Matrix& base, const TargetClassifierSpec& spec) {
    const std::size_t k = base.rows;
    const std::size_t d = base.cols;
    switch (spec.construction) {
        case Construction::kBase:
            break;
        case Construction::kTaskRes:
            if (!spec.residual) throw ValidationError("TaskRes construction without a residual");
            check_shape(spec.residual->values.rows == k && spec.residual->values.cols == d,
                        "residual must be K x D");
            break;
        case Construction::kDirectAdapter:
        case Construction::kAdapterStyle: {
            if (!spec.adapter) throw ValidationError("adapter construction without adapter weights");
            const auto& w = *spec.adapter;
            const std::size_t h = w.w1.cols;
            if (h < 1) throw ValidationError("adapter hidden width must be >= 1");
            check_shape(w.w1.rows == d, "adapter w1 must be D x H");
            check_shape(w.w2.rows == h && w.w2.cols == d, "adapter w2 must be H x D");
            if (w.kind == AdapterKind::kLinearBias) {
                check_shape(w.bias1.size() == h && w.bias2.size() == d,
                            "adapter biases must be H and D");
            } else if (!w.bias1.empty() || !w.bias2.empty()) {
                throw ValidationError("adapter biases are only valid for the linear-with-bias kind");
            }
            break;
        }
    }
    if (spec.projection) {
        check_shape(spec.projection->p.rows == d && spec.projection->p.cols == d,
                    "projection must be D x D");
    }
    if (spec.image_residual) {
        check_shape(spec.image_residual->values.size() == d, "image residual must have length D");
    }
}

Matrix adapter_transform(const Matrix& t, const AdapterWeights& w) {
    check_shape(t.cols == w.w1.rows, "adapter input dim != w1 rows");
    check_shape(w.w1.cols == w.w2.rows, "w1 cols != w2 rows");
    check_shape(w.w2.cols == t.cols, "w2 cols != input dim");

    Matrix hidden = matmul(t, w.w1);  // K×H
    if (w.kind == AdapterKind::kLinearBias) {
        check_shape(w.bias1.size() == hidden.cols, "bias1 length != hidden width");
        for (std::size_t i = 0; i < hidden.rows; ++i) {
            auto row = hidden.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += w.bias1[j];
        }
    }
    if (w.kind == AdapterKind::kRelu) {
        for (double& v : hidden.data) v = std::max(v, 0.0);
    }
    Matrix out = matmul(hidden, w.w2);  // K×D
    if (w.kind == AdapterKind::kLinearBias) {
        check_shape(w.bias2.size() == out.cols, "bias2 length != output dim");
        for (std::size_t i = 0; i < out.rows; ++i) {
            auto row = out.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += w.bias2[j];
        }
    }
    return out;
}

Matrix build_target_classifier(const Matrix& base, const TargetClassifierSpec& spec) {
    validate_spec(base, spec);
    Matrix effective = spec.projection ? matmul(base, spec.projection->p) : base;

    switch (spec.construction) {
        case Construction::kBase:
            return effective;
        case Construction::kTaskRes: {
            const double alpha = spec.residual->effective_alpha();
            Matrix out = effective;
            const auto& x = spec.residual->values;
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * x.data[i];
            return out;
        }
        case Construction::kDirectAdapter:
            return adapter_transform(effective, *spec.adapter);
        case Construction::kAdapterStyle: {
            Matrix phi = adapter_transform(effective, *spec.adapter);
            const double alpha = spec.adapter->alpha;
            Matrix out = effective;
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += alpha * phi.data[i];
            return out;
        }
    }
    throw ValidationError("unknown construction");
}

Matrix apply_image_residual(const Matrix& z, const ImageResidual& r) {
    check_shape(r.values.size() == z.cols, "image residual length != embedding dim");
    Matrix out = z;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += r.alpha * r.values[j];
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - max_logit);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

namespace {

std::vector<double> normalized_or_throw(std::span<const double> v, const char* what) {
    const double norm = norm2(v);
    if (norm <= kZeroNormTolerance) {
        throw NumericError(std::string("zero-norm ") + what + " row in prediction");
    }
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= norm;
    return out;
}

std::vector<double> logits_for(std::span<const double> z_hat, const Matrix& t_hat,
                               double temperature) {
    std::vector<double> logits(t_hat.rows);
    for (std::size_t i = 0; i < t_hat.rows; ++i) logits[i] = dot(z_hat, t_hat.row(i)) / temperature;
    return logits;
}

Matrix normalize_rows_or_throw(const Matrix& m, const char* what) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double norm = norm2(m.row(i));
        if (norm <= kZeroNormTolerance) {
            throw NumericError(std::string("zero-norm ") + what + " row " + std::to_string(i));
        }
        auto row = out.row(i);
        for (double& v : row) v /= norm;
    }
    return out;
}

}  // namespace

std::vector<double> predict_probs(std::span<const double> z_row, const Matrix& t_prime,
                                  double temperature) {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
    const auto z_hat = normalized_or_throw(z_row, "embedding");
    const Matrix t_hat = normalize_rows_or_throw(t_prime, "classifier");
    return softmax(logits_for(z_hat, t_hat, temperature));
}

std::vector<std::int32_t> predict_labels(const Matrix& z, const Matrix& t_prime,
                                         double temperature) {
    if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
    const Matrix t_hat = normalize_rows_or_throw(t_prime, "classifier");
    std::vector<std::int32_t> labels(z.rows);
    for (std::size_t n = 0; n < z.rows; ++n) {
        const auto z_hat = normalized_or_throw(z.row(n), "embedding");
        const auto logits = logits_for(z_hat, t_hat, temperature);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) best = i;
        }
        labels[n] = static_cast<std::int32_t>(best);
    }
    return labels;
}

}  // namespace taskres
