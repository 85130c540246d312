#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taskres/matrix.hpp"
#include "taskres/trainer.hpp"

namespace taskres {

/// Relative transfer difficulty: the precision of a random classifier (1/K)
/// divided by the zero-shot accuracy. Equals 1 exactly when zero-shot is
/// random; higher means harder transfer.
struct DifficultyRecord {
    std::string task;
    std::size_t num_classes = 0;
    double zero_shot_accuracy = 0.0;
    double difficulty = 0.0;
    double log_difficulty = 0.0;
};

DifficultyRecord relative_transfer_difficulty(std::string task, std::size_t num_classes,
                                              double zero_shot_accuracy);

/// Mean and median of |x| over all K·D residual entries, plus per-class
/// means. Median of an even count is the average of the two central order
/// statistics.
struct MagnitudeStats {
    double mean_abs = 0.0;
    double median_abs = 0.0;
    std::vector<double> per_class_mean;
};

MagnitudeStats residual_magnitude(const Matrix& residual_values);

/// Spearman rank correlation with averaged ranks on ties. Requires >= 3
/// points.
double spearman_correlation(std::span<const double> xs, std::span<const double> ys);

/// ρ of (log difficulty, mean residual magnitude) across tasks.
double magnitude_difficulty_correlation(
    const std::vector<std::pair<DifficultyRecord, MagnitudeStats>>& records);

/// Decision-boundary preservation counts between a zero-shot and a tuned
/// classifier: wrong_to_right = corrected samples, right_to_wrong = newly
/// misclassified ones.
struct BoundaryShift {
    std::int64_t wrong_to_right = 0;
    std::int64_t right_to_wrong = 0;
};

BoundaryShift boundary_shift(const std::vector<std::int32_t>& base_labels,
                             const std::vector<std::int32_t>& tuned_labels,
                             const std::vector<std::int32_t>& true_labels);

struct AlphaSweepRow {
    bool learnable = false;
    double alpha = 0.0;        // fixed value, or mean learned tanh(raw) at end
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
};

/// Runs the training protocol once per α with otherwise identical config
/// (same seeds, hence identical episodes, isolating α's effect). Appends a
/// learnable-α row when requested.
std::vector<AlphaSweepRow> alpha_sweep(const Bundle& bundle, TrainConfig cfg,
                                       std::span<const double> alphas, bool include_learnable);

}  // namespace taskres
