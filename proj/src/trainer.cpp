#include "taskres/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "taskres/analysis.hpp"
#include "taskres/errors.hpp"
#include "taskres/rng.hpp"

namespace taskres {

namespace {

// Internal stream purposes (not part of the bundle format contract).
constexpr std::uint64_t kEpisodeTag = 0xE715;
constexpr std::uint64_t kInitTag = 0x171A;
constexpr std::uint64_t kShuffleStage1Tag = 0x5501;
constexpr std::uint64_t kShuffleStage2Tag = 0x5502;

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
        std::swap(order[i], order[j]);
    }
    return order;
}

LabeledEmbeddings gather_rows(const LabeledEmbeddings& pool,
                              const std::vector<std::size_t>& indices) {
    LabeledEmbeddings out;
    out.embeddings = Matrix(indices.size(), pool.embeddings.cols);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = pool.embeddings.row(indices[i]);
        std::copy(src.begin(), src.end(), out.embeddings.row(i).begin());
        out.labels[i] = pool.labels[indices[i]];
    }
    return out;
}

/// One stage of epochs × batches over an episode, mutating the spec's
/// tunable parameters in place. Returns per-epoch (mean loss, lr).
std::pair<std::vector<double>, std::vector<double>> run_stage(
    TargetClassifierSpec& spec, const Matrix& base, const LabeledEmbeddings& episode,
    const TrainConfig& cfg, double temperature, std::size_t total_epochs, std::uint64_t seed,
    std::uint64_t shuffle_tag) {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_lr;
    if (total_epochs == 0) return {epoch_loss, epoch_lr};

    const std::size_t episode_rows = episode.embeddings.rows;
    const std::size_t batch_size = std::min(cfg.batch_size, episode_rows);

    LrSchedule schedule;
    schedule.base_lr = cfg.base_lr;
    schedule.warmup_lr = cfg.warmup_lr;
    schedule.warmup_epochs = 1;
    schedule.total_epochs = total_epochs;

    auto bindings = tunable_params(spec);
    AdamState adam;

    for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
        const double lr = schedule.lr_at(epoch);
        const auto order = shuffled_indices(episode_rows, mix_seed(seed, epoch, shuffle_tag));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < episode_rows; start += batch_size) {
            const std::size_t end = std::min(start + batch_size, episode_rows);
            const std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                     order.begin() + static_cast<std::ptrdiff_t>(end));
            const LabeledEmbeddings batch = gather_rows(episode, batch_idx);
            const LossAndGrads lg = loss_and_grads(batch, base, spec, temperature);
            adam.apply(bindings, lg.grads, lr);
            loss_sum += lg.loss * static_cast<double>(batch_idx.size());
        }
        const double mean_loss = loss_sum / static_cast<double>(episode_rows);
        if (!std::isfinite(mean_loss)) {
            throw NumericError("non-finite mean loss at epoch " + std::to_string(epoch));
        }
        epoch_loss.push_back(mean_loss);
        epoch_lr.push_back(lr);
    }
    return {epoch_loss, epoch_lr};
}

SeedResult run_seed(const Bundle& bundle, const TrainConfig& cfg, std::uint64_t seed) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto& manifest = bundle.manifest;
    const double temperature = manifest.temperature;

    const auto train_it = bundle.splits.find(cfg.train_split);
    if (train_it == bundle.splits.end()) {
        throw ValidationError("bundle has no split '" + cfg.train_split + "'");
    }
    const auto test_it = bundle.splits.find(cfg.test_split);
    if (test_it == bundle.splits.end()) {
        throw ValidationError("bundle has no split '" + cfg.test_split + "'");
    }

    SeedResult result;
    result.seed = seed;

    const FewShotEpisode episode =
        sample_episode(train_it->second, manifest.num_classes, cfg.shots, seed);

    Matrix working_base = bundle.base;
    if (cfg.enhanced_base) {
        auto [projection, enhanced] =
            train_enhanced_base(working_base, episode.selected, cfg, temperature, seed);
        working_base = std::move(enhanced);
        result.enhanced_projection = std::move(projection.p);
        result.enhanced_stage_lr = cfg.base_lr;
    }

    TargetClassifierSpec zero_shot_spec;  // plain base, Eq. 1 path
    const std::vector<std::int32_t> zero_shot_labels =
        predict_split(working_base, test_it->second, zero_shot_spec, temperature);
    result.zero_shot_accuracy = accuracy(zero_shot_labels, test_it->second.labels);

    TargetClassifierSpec spec = make_initial_spec(cfg, working_base, seed);
    auto curves = run_stage(spec, working_base, episode.selected, cfg, temperature,
                            cfg.resolved_epochs(), seed, kShuffleStage2Tag);
    result.epoch_mean_loss = std::move(curves.first);
    result.epoch_lr = std::move(curves.second);

    const std::vector<std::int32_t> tuned_labels =
        predict_split(working_base, test_it->second, spec, temperature);
    result.test_accuracy = accuracy(tuned_labels, test_it->second.labels);

    const BoundaryShift shift =
        boundary_shift(zero_shot_labels, tuned_labels, test_it->second.labels);
    result.wrong_to_right = shift.wrong_to_right;
    result.right_to_wrong = shift.right_to_wrong;

    if (spec.residual) {
        const MagnitudeStats stats = residual_magnitude(spec.residual->values);
        result.residual_mean_abs = stats.mean_abs;
        result.residual_median_abs = stats.median_abs;
        result.residual_per_class_mean = stats.per_class_mean;
        result.final_alpha = spec.residual->effective_alpha();
    } else if (spec.adapter) {
        result.final_alpha = spec.adapter->alpha;
    } else if (spec.image_residual) {
        result.final_alpha = spec.image_residual->alpha;
    }

    result.final_spec = std::move(spec);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kBase: return "base";
        case Variant::kTaskResT: return "taskres-t";
        case Variant::kTaskResI: return "taskres-i";
        case Variant::kTaskResIT: return "taskres-it";
        case Variant::kAdapterStyle: return "adapter-style";
        case Variant::kDirectAdapter: return "direct-adapter";
    }
    return "?";
}

std::optional<Variant> variant_from_name(const std::string& name) {
    for (Variant v : {Variant::kBase, Variant::kTaskResT, Variant::kTaskResI, Variant::kTaskResIT,
                      Variant::kAdapterStyle, Variant::kDirectAdapter}) {
        if (name == variant_name(v)) return v;
    }
    return std::nullopt;
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.shots < 1) throw ValidationError("config: shots must be >= 1");
    if (cfg.batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (!(cfg.base_lr > 0.0)) throw ValidationError("config: base_lr must be > 0");
    if (!(cfg.warmup_lr > 0.0)) throw ValidationError("config: warmup_lr must be > 0");
    if (!std::isfinite(cfg.alpha)) throw ValidationError("config: alpha must be finite");
    if (cfg.seeds.empty()) throw ValidationError("config: at least one seed required");
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.seeds.size(); ++j) {
            if (cfg.seeds[i] == cfg.seeds[j]) {
                throw ValidationError("config: duplicate seed " + std::to_string(cfg.seeds[i]));
            }
        }
    }
    if (cfg.alpha_mode == AlphaMode::kLearnable && cfg.variant != Variant::kTaskResT &&
        cfg.variant != Variant::kTaskResIT) {
        throw ValidationError("config: learnable alpha requires a text-residual variant");
    }
    if (cfg.adapter_hidden && *cfg.adapter_hidden < 1) {
        throw ValidationError("config: adapter hidden width must be >= 1");
    }
}

FewShotEpisode sample_episode(const LabeledEmbeddings& pool, std::size_t num_classes,
                              std::size_t shots, std::uint64_t seed) {
    if (shots < 1) throw ValidationError("sample_episode: shots must be >= 1");
    if (pool.labels.size() != pool.embeddings.rows) {
        throw ValidationError("sample_episode: pool labels do not match rows");
    }

    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < pool.labels.size(); ++i) {
        const std::int32_t label = pool.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
            throw ValidationError("sample_episode: label out of range at row " + std::to_string(i));
        }
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }

    FewShotEpisode episode;
    episode.shots_per_class = shots;
    episode.seed = seed;
    SplitMix64 rng(mix_seed(seed, kEpisodeTag));
    for (std::size_t k = 0; k < num_classes; ++k) {
        auto& candidates = by_class[k];
        if (candidates.size() < shots) {
            throw ValidationError("sample_episode: class " + std::to_string(k) + " has " +
                                  std::to_string(candidates.size()) + " examples, needs " +
                                  std::to_string(shots));
        }
        // partial Fisher-Yates, then order-normalize the selection
        for (std::size_t i = 0; i < shots; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.next_below(candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
        }
        std::sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(shots));
        episode.indices.insert(episode.indices.end(), candidates.begin(),
                               candidates.begin() + static_cast<std::ptrdiff_t>(shots));
    }
    episode.selected = gather_rows(pool, episode.indices);
    return episode;
}

TargetClassifierSpec make_initial_spec(const TrainConfig& cfg, const Matrix& base,
                                       std::uint64_t seed) {
    const std::size_t num_classes = base.rows;
    const std::size_t dim = base.cols;
    TargetClassifierSpec spec;
    switch (cfg.variant) {
        case Variant::kBase:
            spec.construction = Construction::kBase;
            break;
        case Variant::kTaskResT:
        case Variant::kTaskResIT:
            spec.construction = Construction::kTaskRes;
            spec.residual = cfg.alpha_mode == AlphaMode::kLearnable
                                ? TaskResidual::zeros_learnable(num_classes, dim)
                                : TaskResidual::zeros(num_classes, dim, cfg.alpha);
            if (cfg.variant == Variant::kTaskResIT) {
                // shares the residual's α; the stored value is refreshed on read
                spec.image_residual = ImageResidual::zeros(dim, spec.residual->effective_alpha());
            }
            break;
        case Variant::kTaskResI:
            spec.construction = Construction::kBase;
            spec.image_residual = ImageResidual::zeros(dim, cfg.alpha);
            break;
        case Variant::kAdapterStyle:
        case Variant::kDirectAdapter: {
            spec.construction = cfg.variant == Variant::kAdapterStyle ? Construction::kAdapterStyle
                                                                      : Construction::kDirectAdapter;
            const std::size_t hidden = cfg.adapter_hidden.value_or(std::max<std::size_t>(1, dim / 4));
            SplitMix64 rng(mix_seed(seed, kInitTag));
            const double bound1 = 1.0 / std::sqrt(static_cast<double>(dim));
            const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
            for (int attempt = 0; attempt < 64; ++attempt) {
                AdapterWeights w;
                w.kind = cfg.adapter_kind;
                w.alpha = cfg.alpha;
                w.w1 = Matrix(dim, hidden);
                w.w2 = Matrix(hidden, dim);
                for (double& v : w.w1.data) v = rng.next_symmetric(bound1);
                for (double& v : w.w2.data) v = rng.next_symmetric(bound2);
                if (w.kind == AdapterKind::kLinearBias) {
                    w.bias1.assign(hidden, 0.0);
                    w.bias2.assign(dim, 0.0);
                }
                if (spec.construction == Construction::kDirectAdapter) {
                    // reject draws whose ReLU kills a whole row of φ(t)
                    const Matrix phi = adapter_transform(base, w);
                    bool alive = true;
                    for (std::size_t i = 0; i < phi.rows && alive; ++i) {
                        alive = norm2(phi.row(i)) > 1e-6;
                    }
                    if (!alive) continue;
                }
                spec.adapter = std::move(w);
                break;
            }
            if (!spec.adapter) {
                throw NumericError("adapter init degenerate for every redraw attempt");
            }
            break;
        }
    }
    return spec;
}

std::pair<EnhancedBaseProjection, Matrix> train_enhanced_base(const Matrix& base,
                                                              const LabeledEmbeddings& episode,
                                                              const TrainConfig& cfg,
                                                              double temperature,
                                                              std::uint64_t seed) {
    TargetClassifierSpec spec;
    spec.construction = Construction::kBase;
    spec.projection = EnhancedBaseProjection::identity(base.cols);
    if (cfg.enhanced_epochs == 0) {
        return {std::move(*spec.projection), base};
    }
    run_stage(spec, base, episode, cfg, temperature, cfg.enhanced_epochs, seed, kShuffleStage1Tag);
    Matrix enhanced = l2_normalize(matmul(base, spec.projection->p));
    return {std::move(*spec.projection), std::move(enhanced)};
}

std::vector<std::int32_t> predict_split(const Matrix& base, const LabeledEmbeddings& split,
                                        const TargetClassifierSpec& spec, double temperature) {
    if (split.embeddings.rows == 0) throw ValidationError("predict_split: empty split");
    const Matrix t_prime = build_target_classifier(base, spec);
    if (spec.image_residual) {
        ImageResidual effective = *spec.image_residual;
        effective.alpha = spec.image_alpha();
        const Matrix shifted = apply_image_residual(split.embeddings, effective);
        return predict_labels(shifted, t_prime, temperature);
    }
    return predict_labels(split.embeddings, t_prime, temperature);
}

double accuracy(const std::vector<std::int32_t>& predicted,
                const std::vector<std::int32_t>& truth) {
    if (predicted.size() != truth.size()) {
        throw ValidationError("accuracy: prediction/label length mismatch");
    }
    if (predicted.empty()) throw ValidationError("accuracy: empty inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double evaluate(const Matrix& base, const LabeledEmbeddings& split,
                const TargetClassifierSpec& spec, double temperature) {
    return accuracy(predict_split(base, split, spec, temperature), split.labels);
}

RunReport train(const Bundle& bundle, const TrainConfig& cfg) {
    validate_config(cfg);
    validate_bundle(bundle);

    RunReport report;
    report.config = cfg;
    report.config.epochs = cfg.resolved_epochs();
    report.temperature = bundle.manifest.temperature;
    report.base_hash_before = hash_matrix(bundle.base);

    const std::size_t num_seeds = cfg.seeds.size();
    report.seeds.resize(num_seeds);

    const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, num_seeds));
    if (jobs == 1) {
        for (std::size_t i = 0; i < num_seeds; ++i) {
            report.seeds[i] = run_seed(bundle, cfg, cfg.seeds[i]);
        }
    } else {
        std::vector<std::exception_ptr> errors(num_seeds);
        std::vector<std::thread> workers;
        workers.reserve(jobs);
        for (std::size_t w = 0; w < jobs; ++w) {
            workers.emplace_back([&, w]() {
                for (std::size_t i = w; i < num_seeds; i += jobs) {
                    try {
                        report.seeds[i] = run_seed(bundle, cfg, cfg.seeds[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : workers) t.join();
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }

    report.base_hash_after = hash_matrix(bundle.base);

    double acc_sum = 0.0;
    double zero_sum = 0.0;
    for (const auto& s : report.seeds) {
        acc_sum += s.test_accuracy;
        zero_sum += s.zero_shot_accuracy;
    }
    report.mean_accuracy = acc_sum / static_cast<double>(num_seeds);
    report.mean_zero_shot = zero_sum / static_cast<double>(num_seeds);
    double var = 0.0;
    for (const auto& s : report.seeds) {
        const double d = s.test_accuracy - report.mean_accuracy;
        var += d * d;
    }
    report.std_accuracy = std::sqrt(var / static_cast<double>(num_seeds));
    return report;
}

}  // namespace taskres
