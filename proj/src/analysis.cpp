#include "taskres/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "taskres/errors.hpp"

namespace taskres {

DifficultyRecord relative_transfer_difficulty(std::string task, std::size_t num_classes,
                                              double zero_shot_accuracy) {
    if (num_classes < 2) throw ValidationError("difficulty: need at least 2 classes");
    if (!(zero_shot_accuracy > 0.0) || zero_shot_accuracy > 1.0) {
        throw ValidationError("difficulty: zero-shot accuracy must be in (0, 1]");
    }
    DifficultyRecord rec;
    rec.task = std::move(task);
    rec.num_classes = num_classes;
    rec.zero_shot_accuracy = zero_shot_accuracy;
    rec.difficulty = (1.0 / static_cast<double>(num_classes)) / zero_shot_accuracy;
    rec.log_difficulty = std::log(rec.difficulty);
    return rec;
}

MagnitudeStats residual_magnitude(const Matrix& residual_values) {
    MagnitudeStats stats;
    const std::size_t total = residual_values.data.size();
    if (total == 0) throw ValidationError("residual_magnitude: empty residual");

    std::vector<double> magnitudes(total);
    for (std::size_t i = 0; i < total; ++i) magnitudes[i] = std::fabs(residual_values.data[i]);

    double sum = 0.0;
    for (double v : magnitudes) sum += v;
    stats.mean_abs = sum / static_cast<double>(total);

    std::sort(magnitudes.begin(), magnitudes.end());
    if (total % 2 == 1) {
        stats.median_abs = magnitudes[total / 2];
    } else {
        stats.median_abs = 0.5 * (magnitudes[total / 2 - 1] + magnitudes[total / 2]);
    }

    stats.per_class_mean.resize(residual_values.rows);
    for (std::size_t k = 0; k < residual_values.rows; ++k) {
        double row_sum = 0.0;
        for (double v : residual_values.row(k)) row_sum += std::fabs(v);
        stats.per_class_mean[k] = row_sum / static_cast<double>(residual_values.cols);
    }
    return stats;
}

namespace {

/// Averaged ranks (1-based); ties get the mean of the ranks they span.
std::vector<double> ranks_of(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw ValidationError("spearman: a variable is constant, correlation undefined");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman_correlation(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("spearman: length mismatch");
    if (xs.size() < 3) throw ValidationError("spearman: need at least 3 points");
    const auto rx = ranks_of(xs);
    const auto ry = ranks_of(ys);
    return pearson(rx, ry);
}

double magnitude_difficulty_correlation(
    const std::vector<std::pair<DifficultyRecord, MagnitudeStats>>& records) {
    std::vector<double> log_difficulties;
    std::vector<double> magnitudes;
    log_difficulties.reserve(records.size());
    magnitudes.reserve(records.size());
    for (const auto& [rec, stats] : records) {
        log_difficulties.push_back(rec.log_difficulty);
        magnitudes.push_back(stats.mean_abs);
    }
    return spearman_correlation(log_difficulties, magnitudes);
}

BoundaryShift boundary_shift(const std::vector<std::int32_t>& base_labels,
                             const std::vector<std::int32_t>& tuned_labels,
                             const std::vector<std::int32_t>& true_labels) {
    if (base_labels.size() != tuned_labels.size() || base_labels.size() != true_labels.size()) {
        throw ValidationError("boundary_shift: input length mismatch");
    }
    BoundaryShift shift;
    for (std::size_t i = 0; i < base_labels.size(); ++i) {
        const bool base_right = base_labels[i] == true_labels[i];
        const bool tuned_right = tuned_labels[i] == true_labels[i];
        if (!base_right && tuned_right) ++shift.wrong_to_right;
        if (base_right && !tuned_right) ++shift.right_to_wrong;
    }
    return shift;
}

std::vector<AlphaSweepRow> alpha_sweep(const Bundle& bundle, TrainConfig cfg,
                                       std::span<const double> alphas, bool include_learnable) {
    if (alphas.empty() && !include_learnable) {
        throw ValidationError("alpha_sweep: no alpha values given");
    }
    std::vector<AlphaSweepRow> rows;
    rows.reserve(alphas.size() + (include_learnable ? 1 : 0));
    for (double alpha : alphas) {
        TrainConfig run_cfg = cfg;
        run_cfg.alpha_mode = AlphaMode::kFixed;
        run_cfg.alpha = alpha;
        const RunReport report = train(bundle, run_cfg);
        AlphaSweepRow row;
        row.learnable = false;
        row.alpha = alpha;
        row.mean_accuracy = report.mean_accuracy;
        row.std_accuracy = report.std_accuracy;
        rows.push_back(row);
    }
    if (include_learnable) {
        TrainConfig run_cfg = cfg;
        run_cfg.alpha_mode = AlphaMode::kLearnable;
        const RunReport report = train(bundle, run_cfg);
        AlphaSweepRow row;
        row.learnable = true;
        double alpha_sum = 0.0;
        for (const auto& s : report.seeds) alpha_sum += s.final_alpha;
        row.alpha = alpha_sum / static_cast<double>(report.seeds.size());
        row.mean_accuracy = report.mean_accuracy;
        row.std_accuracy = report.std_accuracy;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace taskres
