#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taskres/matrix.hpp"

namespace taskres {

enum class AlphaMode { kFixed, kLearnable };

/// The tunable K×D residual added to the frozen base classifier,
/// t' = t + α·x. Initialized to zeros so tuning starts exactly at the
/// zero-shot classifier. In learnable mode the effective scale is
/// tanh(alpha_raw), so α stays in (-1, 1).
struct TaskResidual {
    Matrix values;  // K×D, same shape as the base classifier
    AlphaMode alpha_mode = AlphaMode::kFixed;
    double alpha = 0.5;
    double alpha_raw = 0.0;  // learnable mode only

    double effective_alpha() const;

    static TaskResidual zeros(std::size_t num_classes, std::size_t dim, double alpha = 0.5);
    static TaskResidual zeros_learnable(std::size_t num_classes, std::size_t dim);
};

enum class AdapterKind { kRelu, kLinear, kLinearBias };

/// Two-layer adapter φ: t -> act(t·W1 + b1)·W2 + b2, with act = ReLU for the
/// nonlinear kind and identity for the linear ones. Biases exist only in the
/// kLinearBias variant. α is the fixed mixing factor of t' = t + α·φ(t).
struct AdapterWeights {
    AdapterKind kind = AdapterKind::kRelu;
    Matrix w1;  // D×H
    Matrix w2;  // H×D
    std::vector<double> bias1;  // H, kLinearBias only
    std::vector<double> bias2;  // D, kLinearBias only
    double alpha = 0.5;

    std::size_t hidden() const { return w1.cols; }
};

/// D×D projection applied to the stored base rows, identity at init. Tuning
/// it (stage one of the enhanced-base protocol) refines the classifier in
/// embedding space before residual tuning starts.
struct EnhancedBaseProjection {
    Matrix p;  // D×D

    static EnhancedBaseProjection identity(std::size_t dim);
};

/// A single task-level D-vector added to every image embedding,
/// z' = z + α·r. Shared across images: per-image parameters could not
/// generalize to unseen test images.
struct ImageResidual {
    std::vector<double> values;  // D, zero-init
    double alpha = 0.5;

    static ImageResidual zeros(std::size_t dim, double alpha = 0.5);
};

enum class Construction { kBase, kDirectAdapter, kAdapterStyle, kTaskRes };

const char* construction_name(Construction c);

/// Which target classifier to build and which side parameters ride along:
///   kBase          t' = t
///   kDirectAdapter t' = φ(t)
///   kAdapterStyle  t' = t + α·φ(t)
///   kTaskRes       t' = t + α·x
/// `projection`, when present, replaces t with t·P before the construction.
/// `image_residual`, when present, shifts image embeddings (TaskRes-I when
/// the construction is kBase, TaskRes-I&T when it is kTaskRes; in the I&T
/// case both sides share the residual's single α).
struct TargetClassifierSpec {
    Construction construction = Construction::kBase;
    std::optional<TaskResidual> residual;
    std::optional<AdapterWeights> adapter;
    std::optional<EnhancedBaseProjection> projection;
    std::optional<ImageResidual> image_residual;

    /// Effective α applied on the image side (shared with the text residual
    /// for TaskRes-I&T, the image residual's own otherwise).
    double image_alpha() const;
};

/// Shape-checks every parameter set in `spec` against the base classifier.
void validate_spec(const Matrix& base, const TargetClassifierSpec& spec);

/// φ(t) for the given adapter weights.
Matrix adapter_transform(const Matrix& t, const AdapterWeights& w);

/// Builds the (unnormalized) target classifier t' for the spec. The image
/// residual is not applied here; it acts on embeddings via
/// apply_image_residual. Rows are re-normalized later, inside prediction.
Matrix build_target_classifier(const Matrix& base, const TargetClassifierSpec& spec);

/// z_i' = z_i + α·r for every row.
Matrix apply_image_residual(const Matrix& z, const ImageResidual& r);

/// Numerically stable softmax (max subtraction). Output sums to 1.
std::vector<double> softmax(std::span<const double> logits);

/// Class probabilities for one embedding row: both z and the rows of
/// t_prime are L2-normalized internally, logits are dot(ẑ, t̂_i)/τ, output is
/// softmax of the logits. Throws NumericError on a zero-norm row.
std::vector<double> predict_probs(std::span<const double> z_row, const Matrix& t_prime,
                                  double temperature);

/// Row-wise argmax of predict_probs; ties break toward the lowest index.
std::vector<std::int32_t> predict_labels(const Matrix& z, const Matrix& t_prime,
                                         double temperature);

}  // namespace taskres
