// Acceptance suite: one check per acceptance criterion, one PASS/FAIL line
// each. Invoked as `acceptance <path-to-taskres-cli>`; the CLI path is used
// by the end-to-end determinism criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taskres/analysis.hpp"
#include "taskres/classifier.hpp"
#include "taskres/embedding_io.hpp"
#include "taskres/gradients.hpp"
#include "taskres/optimizer.hpp"
#include "taskres/synth.hpp"
#include "taskres/trainer.hpp"
#include "test_util.hpp"

using namespace taskres;

namespace {

std::string g_cli_path;

Bundle normalized(Bundle b) {
    b.base = l2_normalize(b.base);
    for (auto& [name, split] : b.splits) {
        (void)name;
        split.embeddings = l2_normalize(split.embeddings);
    }
    return b;
}

Bundle shifted_bundle() {
    SynthSpec spec;
    spec.num_classes = 10;
    spec.dim = 32;
    spec.train_per_class = 16;
    spec.test_per_class = 100;
    spec.shift = 0.8;
    spec.sample_noise = 0.3;
    spec.seed = 0;
    return normalized(generate(spec));
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

// the construction-ranking run also feeds the boundary-counter criterion
RunReport g_taskres_report;
bool g_have_taskres_report = false;

bool check_zero_residual_identity(std::string& detail) {
    SplitMix64 rng(20240);
    for (int trial = 0; trial < 50; ++trial) {
        SynthSpec spec;
        spec.num_classes = 2 + rng.next_below(8);
        spec.dim = 4 + rng.next_below(28);
        spec.train_per_class = 1 + rng.next_below(4);
        spec.test_per_class = 1 + rng.next_below(12);
        spec.shift = rng.next_unit();
        spec.sample_noise = 0.5 * rng.next_unit();
        spec.seed = rng.next();
        const Bundle bundle = normalized(generate(spec));
        const auto& test = bundle.splits.at("test");
        const double tau = bundle.manifest.temperature;

        TargetClassifierSpec zero_x;
        zero_x.construction = Construction::kTaskRes;
        zero_x.residual = TaskResidual::zeros(spec.num_classes, spec.dim, 0.5);

        TargetClassifierSpec zero_alpha;
        zero_alpha.construction = Construction::kTaskRes;
        zero_alpha.residual = TaskResidual::zeros(spec.num_classes, spec.dim, 0.0);
        zero_alpha.residual->values =
            test_util::random_matrix(spec.num_classes, spec.dim, spec.seed ^ 0xA1FAu, 0.4);

        const Matrix t_base = bundle.base;
        const Matrix t_zero_x = build_target_classifier(bundle.base, zero_x);
        const Matrix t_zero_alpha = build_target_classifier(bundle.base, zero_alpha);

        for (std::size_t n = 0; n < test.embeddings.rows; ++n) {
            const auto base_probs = predict_probs(test.embeddings.row(n), t_base, tau);
            for (const Matrix* t_prime : {&t_zero_x, &t_zero_alpha}) {
                const auto probs = predict_probs(test.embeddings.row(n), *t_prime, tau);
                if (std::memcmp(probs.data(), base_probs.data(),
                                probs.size() * sizeof(double)) != 0) {
                    detail = "probabilities diverge on trial " + std::to_string(trial);
                    return false;
                }
            }
        }
    }
    detail = "50 random bundles, bitwise-equal probabilities for x=0 and alpha=0";
    return true;
}

bool check_gradient_oracle(std::string& detail) {
    const std::size_t k = 3, d = 5, h = 2, n = 4;
    const double tau = 0.1;
    double worst_rel = 0.0, worst_abs = 0.0;
    for (test_util::GradConfig config : test_util::kAllGradConfigs) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Matrix base = test_util::random_unit_rows(k, d, 40000 + seed * 31);
            const LabeledEmbeddings batch = test_util::random_batch(n, d, k, 41000 + seed * 31);
            const auto spec = test_util::make_valid_gradient_spec(config, base, batch, tau, h,
                                                                  42000 + seed * 31);
            const auto stats = test_util::finite_difference_check(spec, batch, base, tau);
            worst_rel = std::max(worst_rel, stats.max_rel_err);
            worst_abs = std::max(worst_abs, stats.max_abs_small);
            if (stats.max_rel_err >= 1e-4 || stats.max_abs_small >= 1e-8) {
                detail = std::string(test_util::grad_config_name(config)) + " seed " +
                         std::to_string(seed) + ": rel " + std::to_string(stats.max_rel_err);
                return false;
            }
        }
    }
    std::ostringstream out;
    out << "6 configs x 20 seeds, worst relative error " << worst_rel << ", worst small-entry |fd| "
        << worst_abs;
    detail = out.str();
    return true;
}

bool check_schedule_fixture(std::string& detail) {
    constexpr double kPi = 3.14159265358979323846;
    for (double base_lr : {2e-3, 2e-4, 5e-2, 1.0}) {
        for (std::size_t total : {100u, 101u, 200u, 7u}) {
            const LrSchedule schedule{base_lr, 1e-5, 1, total};
            if (schedule.lr_at(0) != 1e-5) {
                detail = "warmup epoch not 1e-5";
                return false;
            }
            const auto closed_form = [&](std::size_t epoch) {
                return base_lr * 0.5 *
                       (1.0 + std::cos(kPi * static_cast<double>(epoch - 1) /
                                       static_cast<double>(total - 1)));
            };
            for (std::size_t epoch : {std::size_t{1}, total / 2, total - 1}) {
                if (epoch < 1 || epoch >= total) continue;
                if (std::abs(schedule.lr_at(epoch) - closed_form(epoch)) > 1e-12) {
                    detail = "cosine value differs at epoch " + std::to_string(epoch);
                    return false;
                }
            }
        }
    }
    detail = "epoch 0 = 1e-5 for all base rates; cosine closed form matches at {1, mid, last}";
    return true;
}

bool check_adam_oracle(std::string& detail) {
    struct ReferenceAdam {
        std::vector<double> m, v;
        long t = 0;
        explicit ReferenceAdam(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
        void step(std::vector<double>& theta, const std::vector<double>& grad, double lr) {
            ++t;
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = 0.9 * m[i] + 0.1 * grad[i];
                v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
                const double mh = m[i] / (1.0 - std::pow(0.9, t));
                const double vh = v[i] / (1.0 - std::pow(0.999, t));
                theta[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
            }
        }
    };

    for (std::size_t size : {std::size_t{1}, std::size_t{16}}) {
        std::vector<double> theta(size);
        SplitMix64 init(123 + size);
        for (double& v : theta) v = init.next_gaussian();
        std::vector<double> ref_theta = theta;

        AdamState adam;
        ReferenceAdam ref(size);
        std::vector<ParamBinding> bindings = {{"p", theta.data(), size}};
        SplitMix64 grads_rng(321 + size);
        for (int step = 0; step < 10; ++step) {
            std::vector<double> grad(size);
            for (double& g : grad) g = grads_rng.next_gaussian();
            const double lr = 0.01 + 0.002 * step;
            adam.apply(bindings, {{"p", grad}}, lr);
            ref.step(ref_theta, grad, lr);
        }
        for (std::size_t i = 0; i < size; ++i) {
            if (std::abs(theta[i] - ref_theta[i]) > 1e-12) {
                detail = "trajectory diverges from reference at entry " + std::to_string(i);
                return false;
            }
        }
    }
    detail = "scalar and 4x4 ten-step trajectories match the reference within 1e-12";
    return true;
}

bool check_difficulty_arithmetic(std::string& detail) {
    const auto imagenet = relative_transfer_difficulty("imagenet", 1000, 0.5818);
    const auto eurosat = relative_transfer_difficulty("eurosat", 10, 0.3756);
    const double want_imagenet = (1.0 / 1000.0) / 0.5818;
    const double want_eurosat = (1.0 / 10.0) / 0.3756;
    if (std::abs(imagenet.difficulty - want_imagenet) / want_imagenet >= 1e-6) {
        detail = "ImageNet ratio off";
        return false;
    }
    if (std::abs(eurosat.difficulty - want_eurosat) / want_eurosat >= 1e-6) {
        detail = "EuroSAT ratio off";
        return false;
    }
    char rendered[32];
    std::snprintf(rendered, sizeof(rendered), "%.4g", imagenet.difficulty);
    if (std::string(rendered) != "0.001719") {
        detail = std::string("ImageNet renders as ") + rendered;
        return false;
    }
    std::snprintf(rendered, sizeof(rendered), "%.4g", eurosat.difficulty);
    if (std::string(rendered) != "0.2662") {
        detail = std::string("EuroSAT renders as ") + rendered;
        return false;
    }
    if (!(eurosat.difficulty > imagenet.difficulty)) {
        detail = "EuroSAT not harder than ImageNet";
        return false;
    }
    std::ostringstream out;
    out << "1.7188e-3 and 2.6624e-1 from the reference zero-shot rates, EuroSAT > ImageNet";
    detail = out.str();
    return true;
}

bool check_construction_ranking(std::string& detail) {
    const Bundle bundle = shifted_bundle();
    auto run_variant = [&](Variant v) {
        TrainConfig cfg;
        cfg.variant = v;
        cfg.shots = 16;
        cfg.seeds = kSeeds;
        cfg.jobs = 2;
        return train(bundle, cfg);
    };
    const RunReport taskres_report = run_variant(Variant::kTaskResT);
    const RunReport adapter_report = run_variant(Variant::kAdapterStyle);
    const RunReport base_report = run_variant(Variant::kBase);
    const RunReport direct_report = run_variant(Variant::kDirectAdapter);
    g_taskres_report = taskres_report;
    g_have_taskres_report = true;

    const double taskres_acc = taskres_report.mean_accuracy;
    const double adapter_acc = adapter_report.mean_accuracy;
    const double base_acc = base_report.mean_accuracy;
    const double direct_acc = direct_report.mean_accuracy;

    std::ostringstream out;
    out << "t+ax " << taskres_acc << " >= t+aphi(t) " << adapter_acc << " >= t " << base_acc
        << " >= phi(t) " << direct_acc << ", gain " << (taskres_acc - base_acc);
    detail = out.str();
    return taskres_acc >= adapter_acc && adapter_acc >= base_acc && base_acc >= direct_acc &&
           taskres_acc - base_acc >= 0.05;
}

bool check_difficulty_magnitude_correlation(std::string& detail) {
    SynthSpec spec;
    spec.num_classes = 10;
    spec.dim = 32;
    spec.train_per_class = 16;
    spec.test_per_class = 100;
    spec.sample_noise = 0.3;
    spec.seed = 0;
    const std::vector<double> shifts = {0.1, 0.2, 0.4, 0.8, 1.2, 1.6};
    const auto bundles = difficulty_ladder(spec, shifts);

    std::vector<std::pair<DifficultyRecord, MagnitudeStats>> records;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        const Bundle bundle = normalized(bundles[i]);
        TrainConfig cfg;
        cfg.shots = 16;
        cfg.seeds = kSeeds;
        cfg.jobs = 2;
        const RunReport report = train(bundle, cfg);
        const auto rec = relative_transfer_difficulty("shift_" + std::to_string(shifts[i]), 10,
                                                      report.mean_zero_shot);
        MagnitudeStats stats;
        double mean_sum = 0.0;
        for (const auto& s : report.seeds) mean_sum += s.residual_mean_abs;
        stats.mean_abs = mean_sum / static_cast<double>(report.seeds.size());
        records.emplace_back(rec, stats);
    }
    const double rho = magnitude_difficulty_correlation(records);
    std::ostringstream out;
    out << "Spearman rho = " << rho << " over 6 shifts (5-seed means)";
    detail = out.str();
    return rho >= 0.8;
}

bool check_alpha_sweep_direction(std::string& detail) {
    const Bundle bundle = shifted_bundle();
    TrainConfig cfg;
    cfg.shots = 16;
    cfg.seeds = kSeeds;
    cfg.jobs = 2;
    const std::vector<double> alphas = {0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
    const auto rows = alpha_sweep(bundle, cfg, alphas, false);
    const double zero_alpha_acc = rows[0].mean_accuracy;
    std::ostringstream out;
    out << "alpha=0: " << zero_alpha_acc << ";";
    bool ok = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        out << " " << rows[i].alpha << ": " << rows[i].mean_accuracy;
        if (rows[i].mean_accuracy < zero_alpha_acc) ok = false;
    }
    detail = out.str();
    return ok;
}

bool check_magnitude_shot_trend(std::string& detail) {
    const Bundle bundle = shifted_bundle();
    auto mean_magnitude = [&](std::size_t shots) {
        TrainConfig cfg;
        cfg.shots = shots;
        cfg.seeds = kSeeds;
        cfg.jobs = 2;
        const RunReport report = train(bundle, cfg);
        double total = 0.0;
        for (const auto& s : report.seeds) total += s.residual_mean_abs;
        return total / static_cast<double>(report.seeds.size());
    };
    const double magnitude_1 = mean_magnitude(1);
    const double magnitude_16 = mean_magnitude(16);
    std::ostringstream out;
    out << "mean |x| at 16 shots " << magnitude_16 << " vs 1 shot " << magnitude_1;
    detail = out.str();
    return magnitude_16 > magnitude_1;
}

bool check_determinism(std::string& detail) {
    test_util::TempDir dir("acceptance_det");

    // bundle round trip is byte-identical
    const Bundle bundle = shifted_bundle();
    write_bundle(dir.path / "a", bundle);
    const Bundle reread = read_bundle(dir.path / "a");
    write_bundle(dir.path / "b", reread);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    for (const char* name : {"base.f32", "train.f32", "train.labels.u32", "test.f32",
                             "test.labels.u32"}) {
        if (slurp(dir.path / "a" / name) != slurp(dir.path / "b" / name)) {
            detail = std::string("payload ") + name + " differs after round trip";
            return false;
        }
    }

    // two identical CLI train runs give byte-identical metric values
    const std::string base_cmd = "\"" + g_cli_path + "\" train --bundle \"" +
                                 (dir.path / "a").string() + "\" --shots 4 --epochs 40 " +
                                 "--seeds 1,2,3 --out \"";
    const std::string log_tail = "\" > /dev/null 2>&1";
    if (std::system((base_cmd + (dir.path / "r1").string() + log_tail).c_str()) != 0 ||
        std::system((base_cmd + (dir.path / "r2").string() + log_tail).c_str()) != 0) {
        detail = "CLI train invocation failed";
        return false;
    }
    auto metrics_of = [](const std::filesystem::path& p) {
        std::ifstream in(p / "report.json");
        nlohmann::json j;
        in >> j;
        return j.at("metrics").dump();
    };
    const std::string m1 = metrics_of(dir.path / "r1");
    const std::string m2 = metrics_of(dir.path / "r2");
    if (m1 != m2) {
        detail = "report metric subtrees differ between identical runs";
        return false;
    }
    detail = "payload round trip byte-identical; repeated CLI runs serialize identical metrics";
    return true;
}

bool check_boundary_counter(std::string& detail) {
    const std::vector<std::int32_t> a = {0, 1, 2};
    const auto identity = boundary_shift(a, a, {2, 1, 0});
    if (identity.wrong_to_right != 0 || identity.right_to_wrong != 0) {
        detail = "identity fixture failed";
        return false;
    }
    const auto counted = boundary_shift({0, 1, 0}, {1, 1, 1}, {1, 1, 0});
    if (counted.wrong_to_right != 1 || counted.right_to_wrong != 1) {
        detail = "hand-counted fixture failed";
        return false;
    }

    if (!g_have_taskres_report) {
        detail = "criterion 6 run unavailable";
        return false;
    }
    std::int64_t w2r = 0, r2w = 0;
    for (const auto& s : g_taskres_report.seeds) {
        w2r += s.wrong_to_right;
        r2w += s.right_to_wrong;
    }
    std::ostringstream out;
    out << "fixtures exact; residual-tuning run: W2R " << w2r << " vs R2W " << r2w;
    detail = out.str();
    return r2w < w2r;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> check;
    double budget_seconds;  // 0 = no stated budget
};

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli_path = argv[1];

    const std::vector<Criterion> criteria = {
        {1, "zero-residual identity", check_zero_residual_identity, 5.0},
        {2, "gradient oracle", check_gradient_oracle, 30.0},
        {3, "schedule fixture", check_schedule_fixture, 0.0},
        {4, "adam oracle", check_adam_oracle, 0.0},
        {5, "difficulty arithmetic", check_difficulty_arithmetic, 0.0},
        {6, "construction ranking", check_construction_ranking, 60.0},
        {7, "difficulty-magnitude correlation", check_difficulty_magnitude_correlation, 120.0},
        {8, "alpha sweep direction", check_alpha_sweep_direction, 0.0},
        {9, "magnitude vs shots trend", check_magnitude_shot_trend, 0.0},
        {10, "determinism", check_determinism, 0.0},
        {11, "boundary counter", check_boundary_counter, 0.0},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (criterion.id == 10 && g_cli_path.empty()) {
            std::cout << "[FAIL] 10. determinism: CLI path not supplied (argv[1])\n";
            ++failures;
            continue;
        }
        std::string detail;
        const auto start = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = criterion.check(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && criterion.budget_seconds > 0.0 && elapsed > criterion.budget_seconds) {
            ok = false;
            detail += " [exceeded " + std::to_string(criterion.budget_seconds) + "s budget]";
        }
        std::printf("[%s] %2d. %s (%.2fs): %s\n", ok ? "PASS" : "FAIL", criterion.id,
                    criterion.name, elapsed, detail.c_str());
        if (!ok) ++failures;
    }
    if (failures == 0) {
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    } else {
        std::printf("acceptance: %d criteria FAILED\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
