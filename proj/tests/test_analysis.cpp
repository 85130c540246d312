#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "taskres/analysis.hpp"
#include "taskres/errors.hpp"
#include "taskres/synth.hpp"
#include "test_util.hpp"

using namespace taskres;

namespace {

/// Brute-force Spearman: midranks by explicit counting, then a direct
/// Pearson over the ranks in long double.
double spearman_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto midranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t below = 0, equal = 0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[j] < v[i]) ++below;
                if (v[j] == v[i]) ++equal;
            }
            r[i] = static_cast<double>(below) + 0.5 * static_cast<double>(equal + 1);
        }
        return r;
    };
    const auto rx = midranks(xs);
    const auto ry = midranks(ys);
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return static_cast<double>(sxy / sqrtl(sxx * syy));
}

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& row : rows) {
        std::size_t j = 0;
        for (double v : row) m.at(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST_CASE("relative_transfer_difficulty: reference fixtures") {
    const auto imagenet = relative_transfer_difficulty("imagenet", 1000, 0.5818);
    CHECK(std::abs(imagenet.difficulty - 0.001 / 0.5818) / (0.001 / 0.5818) < 1e-12);
    CHECK(imagenet.difficulty == doctest::Approx(1.719e-3).epsilon(1e-3));

    const auto eurosat = relative_transfer_difficulty("eurosat", 10, 0.3756);
    CHECK(std::abs(eurosat.difficulty - 0.1 / 0.3756) / (0.1 / 0.3756) < 1e-12);
    CHECK(eurosat.difficulty == doctest::Approx(2.662e-1).epsilon(1e-3));

    // EuroSAT is the harder transfer despite having 100x fewer classes
    CHECK(eurosat.difficulty > imagenet.difficulty);
}

TEST_CASE("relative_transfer_difficulty: random classifier fixed point and errors") {
    const auto random_cls = relative_transfer_difficulty("rand", 10, 0.1);
    CHECK(random_cls.difficulty == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(random_cls.log_difficulty == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(relative_transfer_difficulty("x", 10, 0.0), ValidationError);
    CHECK_THROWS_AS(relative_transfer_difficulty("x", 10, -0.2), ValidationError);
    CHECK_THROWS_AS(relative_transfer_difficulty("x", 1, 0.5), ValidationError);
}

TEST_CASE("difficulty is strictly decreasing in accuracy and in K") {
    double prev = relative_transfer_difficulty("a", 10, 0.05).difficulty;
    for (double acc : {0.1, 0.2, 0.4, 0.8, 1.0}) {
        const double d = relative_transfer_difficulty("a", 10, acc).difficulty;
        CHECK(d < prev);
        prev = d;
    }
    prev = relative_transfer_difficulty("b", 2, 0.5).difficulty;
    for (std::size_t k : {5u, 10u, 100u, 1000u}) {
        const double d = relative_transfer_difficulty("b", k, 0.5).difficulty;
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("residual_magnitude: fixtures") {
    CHECK(residual_magnitude(Matrix(3, 4, 0.0)).mean_abs == 0.0);
    CHECK(residual_magnitude(Matrix(3, 4, 0.0)).median_abs == 0.0);

    const auto stats = residual_magnitude(from_rows({{1.0, -1.0}, {2.0, -2.0}}));
    CHECK(stats.mean_abs == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(stats.median_abs == doctest::Approx(1.5).epsilon(1e-15));
    REQUIRE(stats.per_class_mean.size() == 2);
    CHECK(stats.per_class_mean[0] == doctest::Approx(1.0));
    CHECK(stats.per_class_mean[1] == doctest::Approx(2.0));
}

TEST_CASE("residual_magnitude: odd-count median and sign/permutation invariance") {
    const auto odd = residual_magnitude(from_rows({{-3.0, 1.0, 2.0}}));
    CHECK(odd.median_abs == 2.0);

    const Matrix x = test_util::random_matrix(4, 6, 2024);
    const auto original = residual_magnitude(x);

    Matrix flipped = x;
    SplitMix64 rng(2025);
    for (double& v : flipped.data) {
        if (rng.next_unit() < 0.5) v = -v;
    }
    const auto flipped_stats = residual_magnitude(flipped);
    CHECK(flipped_stats.mean_abs == doctest::Approx(original.mean_abs).epsilon(1e-15));
    CHECK(flipped_stats.median_abs == doctest::Approx(original.median_abs).epsilon(1e-15));

    Matrix permuted(4, 6);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    for (std::size_t i = 0; i < 4; ++i) {
        std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), permuted.row(i).begin());
    }
    const auto permuted_stats = residual_magnitude(permuted);
    CHECK(permuted_stats.mean_abs == doctest::Approx(original.mean_abs).epsilon(1e-15));
    CHECK(permuted_stats.median_abs == doctest::Approx(original.median_abs).epsilon(1e-15));
}

TEST_CASE("spearman: monotone fixtures and the brute-force oracle") {
    const std::vector<double> inc_x = {1, 2, 3, 4, 5};
    const std::vector<double> inc_y = {10, 20, 25, 40, 100};
    CHECK(spearman_correlation(inc_x, inc_y) == doctest::Approx(1.0).epsilon(1e-15));

    std::vector<double> dec_y = inc_y;
    std::reverse(dec_y.begin(), dec_y.end());
    CHECK(spearman_correlation(inc_x, dec_y) == doctest::Approx(-1.0).epsilon(1e-15));

    SplitMix64 rng(31337);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> xs(8), ys(8);
        for (auto& v : xs) v = rng.next_gaussian();
        for (auto& v : ys) v = rng.next_gaussian();
        // inject a tie to exercise averaged ranks
        xs[3] = xs[6];
        CHECK(spearman_correlation(xs, ys) ==
              doctest::Approx(spearman_oracle(xs, ys)).epsilon(1e-12));
    }
}

TEST_CASE("spearman: rank invariance under strictly monotone transforms") {
    SplitMix64 rng(424242);
    std::vector<double> xs(10), ys(10);
    for (auto& v : xs) v = rng.next_gaussian();
    for (auto& v : ys) v = rng.next_gaussian();
    const double rho = spearman_correlation(xs, ys);
    std::vector<double> exp_x(10);
    for (std::size_t i = 0; i < 10; ++i) exp_x[i] = std::exp(xs[i]);
    CHECK(spearman_correlation(exp_x, ys) == doctest::Approx(rho).epsilon(1e-12));
}

TEST_CASE("spearman: input validation") {
    CHECK_THROWS_AS(spearman_correlation(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                    ValidationError);
    CHECK_THROWS_AS(
        spearman_correlation(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}),
        ValidationError);
}

TEST_CASE("boundary_shift: fixtures") {
    const std::vector<std::int32_t> a = {0, 1, 2, 1};
    const std::vector<std::int32_t> t = {0, 1, 0, 2};
    const auto same = boundary_shift(a, a, t);
    CHECK(same.wrong_to_right == 0);
    CHECK(same.right_to_wrong == 0);

    const auto counted = boundary_shift({0, 1, 0}, {1, 1, 1}, {1, 1, 0});
    CHECK(counted.wrong_to_right == 1);
    CHECK(counted.right_to_wrong == 1);

    CHECK_THROWS_AS(boundary_shift({0, 1}, {0}, {0, 1}), ValidationError);
}

TEST_CASE("boundary_shift: counts bounded by sample count") {
    SplitMix64 rng(555);
    std::vector<std::int32_t> base(40), tuned(40), truth(40);
    for (std::size_t i = 0; i < 40; ++i) {
        base[i] = static_cast<std::int32_t>(rng.next_below(4));
        tuned[i] = static_cast<std::int32_t>(rng.next_below(4));
        truth[i] = static_cast<std::int32_t>(rng.next_below(4));
    }
    const auto shift = boundary_shift(base, tuned, truth);
    CHECK(shift.wrong_to_right + shift.right_to_wrong <= 40);
}

TEST_CASE("alpha_sweep: alpha = 0 equals zero-shot exactly, episodes shared") {
    SynthSpec sp;
    sp.num_classes = 5;
    sp.dim = 16;
    sp.train_per_class = 8;
    sp.test_per_class = 30;
    sp.shift = 0.8;
    sp.sample_noise = 0.3;
    sp.seed = 2;
    Bundle bundle = generate(sp);
    bundle.base = l2_normalize(bundle.base);
    for (auto& [name, split] : bundle.splits) {
        (void)name;
        split.embeddings = l2_normalize(split.embeddings);
    }

    TrainConfig cfg;
    cfg.shots = 4;
    cfg.epochs = 20;
    cfg.seeds = {1, 2};

    const std::vector<double> alphas = {0.0, 0.5};
    const auto rows = alpha_sweep(bundle, cfg, alphas, true);
    REQUIRE(rows.size() == 3);

    TargetClassifierSpec plain;
    const double zero_shot =
        evaluate(bundle.base, bundle.splits.at("test"), plain, bundle.manifest.temperature);
    CHECK(rows[0].alpha == 0.0);
    CHECK(rows[0].mean_accuracy == zero_shot);

    CHECK(rows[2].learnable);
    CHECK(rows[2].alpha > -1.0);
    CHECK(rows[2].alpha < 1.0);
}
