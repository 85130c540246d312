#include "taskres/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "taskres/analysis.hpp"
#include "taskres/artifacts.hpp"
#include "taskres/errors.hpp"
#include "taskres/synth.hpp"

namespace taskres {

namespace {

using nlohmann::json;

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("TASKRES_LOG");
        if (!env) return LogLevel::kInfo;
        const std::string v(env);
        if (v == "quiet" || v == "0") return LogLevel::kQuiet;
        if (v == "debug" || v == "2") return LogLevel::kDebug;
        return LogLevel::kInfo;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) std::cerr << "[taskres] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::kDebug) std::cerr << "[taskres] " << msg << "\n";
}

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

/// Shared training flags. Precedence: explicit flags > --config file >
/// built-in defaults.
struct TrainFlags {
    std::string config_file;
    std::string variant;
    std::string adapter_kind;
    std::size_t shots = 0;
    std::int64_t epochs = -1;
    std::size_t batch_size = 0;
    double base_lr = 0.0;
    double warmup_lr = 0.0;
    std::string alpha;
    bool enhanced_base = false;
    std::size_t enhanced_epochs = 0;
    std::vector<std::uint64_t> seeds;
    std::size_t adapter_hidden = 0;
    std::string train_split;
    std::string test_split;
    std::size_t jobs = 0;
};

void add_train_flags(CLI::App* cmd, TrainFlags& flags) {
    cmd->add_option("--config", flags.config_file, "JSON config file (flags override it)");
    cmd->add_option("--variant", flags.variant,
                    "base | taskres-t | taskres-i | taskres-it | adapter-style | direct-adapter")
        ->default_str("taskres-t");
    cmd->add_option("--adapter-kind", flags.adapter_kind, "relu | linear | linear-bias")
        ->default_str("relu");
    cmd->add_option("--shots", flags.shots, "shots per class")->default_str("16");
    cmd->add_option("--epochs", flags.epochs,
                    "training epochs (default 100 for <=4 shots, 200 for >=8)");
    cmd->add_option("--batch-size", flags.batch_size, "batch size, clamped to episode size")
        ->default_str("256");
    cmd->add_option("--lr", flags.base_lr, "base learning rate")->default_str("0.002");
    cmd->add_option("--warmup-lr", flags.warmup_lr, "fixed learning rate of the first epoch")
        ->default_str("1e-05");
    cmd->add_option("--alpha", flags.alpha, "residual scaling factor, or 'learnable'")
        ->default_str("0.5");
    cmd->add_flag("--enhanced-base", flags.enhanced_base,
                  "tune the base projection before residual tuning");
    cmd->add_option("--enhanced-epochs", flags.enhanced_epochs, "enhanced-base stage epochs")
        ->default_str("50");
    cmd->add_option("--seeds", flags.seeds, "run seeds (comma separated)")
        ->delimiter(',')
        ->default_str("1,2,3");
    cmd->add_option("--adapter-hidden", flags.adapter_hidden,
                    "adapter hidden width (default D/4)");
    cmd->add_option("--train-split", flags.train_split, "split used for episodes")
        ->default_str("train");
    cmd->add_option("--test-split", flags.test_split, "split used for evaluation")
        ->default_str("test");
    cmd->add_option("--jobs", flags.jobs, "parallel workers across seeds/sweep points")
        ->default_str("1");
}

TrainConfig resolve_config(const CLI::App* cmd, const TrainFlags& flags) {
    TrainConfig cfg;
    if (cmd->count("--config") > 0) {
        std::ifstream in(flags.config_file);
        if (!in) throw IoError("cannot open config file " + flags.config_file);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ValidationError("config file parse error: " + std::string(e.what()));
        }
        cfg = config_from_json(j, cfg);
    }
    if (cmd->count("--variant") > 0) {
        const auto v = variant_from_name(flags.variant);
        if (!v) throw ValidationError("unknown variant '" + flags.variant + "'");
        cfg.variant = *v;
    }
    if (cmd->count("--adapter-kind") > 0) {
        json j;
        j["adapter_kind"] = flags.adapter_kind;
        cfg = config_from_json(j, cfg);
    }
    if (cmd->count("--shots") > 0) cfg.shots = flags.shots;
    if (cmd->count("--epochs") > 0) {
        if (flags.epochs < 0) throw ValidationError("--epochs must be >= 0");
        cfg.epochs = static_cast<std::size_t>(flags.epochs);
    }
    if (cmd->count("--batch-size") > 0) cfg.batch_size = flags.batch_size;
    if (cmd->count("--lr") > 0) cfg.base_lr = flags.base_lr;
    if (cmd->count("--warmup-lr") > 0) cfg.warmup_lr = flags.warmup_lr;
    if (cmd->count("--alpha") > 0) {
        if (flags.alpha == "learnable") {
            cfg.alpha_mode = AlphaMode::kLearnable;
        } else {
            cfg.alpha_mode = AlphaMode::kFixed;
            try {
                cfg.alpha = std::stod(flags.alpha);
            } catch (const std::exception&) {
                throw ValidationError("--alpha must be a number or 'learnable'");
            }
        }
    }
    if (cmd->count("--enhanced-base") > 0) cfg.enhanced_base = true;
    if (cmd->count("--enhanced-epochs") > 0) cfg.enhanced_epochs = flags.enhanced_epochs;
    if (cmd->count("--seeds") > 0) cfg.seeds = flags.seeds;
    if (cmd->count("--adapter-hidden") > 0) cfg.adapter_hidden = flags.adapter_hidden;
    if (cmd->count("--train-split") > 0) cfg.train_split = flags.train_split;
    if (cmd->count("--test-split") > 0) cfg.test_split = flags.test_split;
    if (cmd->count("--jobs") > 0) cfg.jobs = std::max<std::size_t>(1, flags.jobs);
    validate_config(cfg);
    return cfg;
}

std::vector<std::int32_t> read_label_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + " parse error: " + e.what());
    }
    const json* arr = &j;
    if (j.is_object()) {
        if (j.contains("predictions")) {
            arr = &j.at("predictions");
        } else if (j.contains("labels")) {
            arr = &j.at("labels");
        } else {
            throw ValidationError(path.string() + ": expected an array or a "
                                  "{\"predictions\"|\"labels\": [...]} object");
        }
    }
    if (!arr->is_array()) throw ValidationError(path.string() + ": expected a JSON array");
    std::vector<std::int32_t> out;
    out.reserve(arr->size());
    for (const auto& v : *arr) out.push_back(v.get<std::int32_t>());
    return out;
}

void write_label_json(const std::filesystem::path& path, const std::vector<std::int32_t>& labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << json(labels).dump() << "\n";
}

void print_report_summary(const RunReport& report) {
    std::cout << std::setprecision(6);
    for (const auto& s : report.seeds) {
        std::cout << "seed " << s.seed << ": accuracy " << s.test_accuracy << " (zero-shot "
                  << s.zero_shot_accuracy << ", W2R " << s.wrong_to_right << ", R2W "
                  << s.right_to_wrong << ")\n";
    }
    std::cout << "mean accuracy " << report.mean_accuracy << " +/- " << report.std_accuracy
              << " over " << report.seeds.size() << " seeds\n";
}

// ---- subcommands ----

int cmd_train(const CLI::App* cmd, const TrainFlags& flags, const std::string& bundle_dir,
              const std::string& out_dir, bool force) {
    const TrainConfig cfg = resolve_config(cmd, flags);
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir) && !force) {
        throw ValidationError("output directory " + out_dir +
                              " already exists; pass --force or choose a new path");
    }
    const Bundle bundle = load_bundle_normalized(bundle_dir);
    log_info("training " + std::string(variant_name(cfg.variant)) + " on " + bundle_dir + " (" +
             std::to_string(cfg.seeds.size()) + " seeds)");
    const RunReport report = train(bundle, cfg);
    write_run_outputs(out_dir, bundle_dir, report, force);
    print_report_summary(report);
    log_info("outputs written to " + out_dir);
    return kExitOk;
}

int cmd_eval(const std::string& bundle_dir, const std::string& params_file,
             const std::string& split, const std::string& dump_preds,
             const std::string& dump_labels, bool per_class) {
    const Bundle bundle = load_bundle_normalized(bundle_dir);
    const auto split_it = bundle.splits.find(split);
    if (split_it == bundle.splits.end()) {
        throw ValidationError("bundle has no split '" + split + "'");
    }
    const auto& data = split_it->second;
    const double tau = bundle.manifest.temperature;

    struct Entry {
        std::string name;
        Matrix base;
        TargetClassifierSpec spec;
    };
    std::vector<Entry> entries;
    if (params_file.empty()) {
        entries.push_back({"zero-shot", bundle.base, TargetClassifierSpec{}});
    } else {
        for (auto& loaded : read_params(params_file)) {
            Entry e;
            e.name = "seed " + std::to_string(loaded.seed);
            e.base = loaded.enhanced_projection
                         ? l2_normalize(matmul(bundle.base, *loaded.enhanced_projection))
                         : bundle.base;
            e.spec = std::move(loaded.spec);
            entries.push_back(std::move(e));
        }
        if (entries.empty()) throw ValidationError("params file holds no seed records");
    }

    std::cout << std::setprecision(6);
    double acc_sum = 0.0;
    std::vector<std::int32_t> last_preds;
    for (const auto& e : entries) {
        const auto preds = predict_split(e.base, data, e.spec, tau);
        const double acc = accuracy(preds, data.labels);
        acc_sum += acc;
        std::cout << e.name << ": accuracy " << acc << " on " << data.labels.size() << " rows\n";
        if (per_class) {
            const std::size_t k = bundle.manifest.num_classes;
            std::vector<std::size_t> correct(k, 0), total(k, 0);
            for (std::size_t i = 0; i < preds.size(); ++i) {
                const auto y = static_cast<std::size_t>(data.labels[i]);
                ++total[y];
                if (preds[i] == data.labels[i]) ++correct[y];
            }
            for (std::size_t c = 0; c < k; ++c) {
                const double class_acc =
                    total[c] == 0 ? 0.0
                                  : static_cast<double>(correct[c]) / static_cast<double>(total[c]);
                std::cout << "  class " << c << " (" << bundle.manifest.class_names[c] << "): "
                          << class_acc << "\n";
            }
        }
        last_preds = preds;
    }
    if (entries.size() > 1) {
        std::cout << "mean accuracy " << acc_sum / static_cast<double>(entries.size()) << "\n";
    }
    if (!dump_preds.empty()) write_label_json(dump_preds, last_preds);
    if (!dump_labels.empty()) write_label_json(dump_labels, data.labels);
    return kExitOk;
}

int cmd_sweep_alpha(const CLI::App* cmd, const TrainFlags& flags, const std::string& bundle_dir,
                    const std::vector<double>& alphas, bool learnable,
                    const std::string& out_file) {
    TrainConfig cfg = resolve_config(cmd, flags);
    const Bundle bundle = load_bundle_normalized(bundle_dir);
    log_info("alpha sweep over " + std::to_string(alphas.size()) + " values");
    const auto rows = alpha_sweep(bundle, cfg, alphas, learnable);

    std::ostringstream csv;
    csv << std::setprecision(17);
    csv << "alpha,learnable,mean_accuracy,std_accuracy\n";
    for (const auto& row : rows) {
        csv << row.alpha << "," << (row.learnable ? 1 : 0) << "," << row.mean_accuracy << ","
            << row.std_accuracy << "\n";
    }
    std::cout << csv.str();
    if (!out_file.empty()) {
        std::ofstream out(out_file);
        if (!out) throw IoError("cannot write " + out_file);
        out << csv.str();
    }
    return kExitOk;
}

int cmd_difficulty_single(std::size_t num_classes, double zero_shot, const std::string& task) {
    const auto rec = relative_transfer_difficulty(task, num_classes, zero_shot);
    std::cout << std::setprecision(4) << rec.difficulty << std::setprecision(6)
              << " (log " << rec.log_difficulty << ", task " << rec.task << ", K "
              << rec.num_classes << ", zero-shot " << rec.zero_shot_accuracy << ")\n";
    return kExitOk;
}

int cmd_difficulty_ladder(const CLI::App* cmd, const TrainFlags& flags, const SynthSpec& base_spec,
                          const std::vector<double>& shifts, const std::string& out_file,
                          const std::string& json_file) {
    TrainConfig cfg = resolve_config(cmd, flags);
    cfg.variant = Variant::kTaskResT;  // the instrument measures the text residual
    const auto bundles = difficulty_ladder(base_spec, shifts);

    std::vector<std::pair<DifficultyRecord, MagnitudeStats>> records;
    std::ostringstream csv;
    csv << std::setprecision(17);
    csv << "task,K,zero_shot,difficulty,mean_mag,median_mag\n";
    json rows = json::array();
    for (std::size_t i = 0; i < bundles.size(); ++i) {
        Bundle bundle = bundles[i];
        bundle.base = l2_normalize(bundle.base);
        for (auto& [name, split] : bundle.splits) {
            (void)name;
            split.embeddings = l2_normalize(split.embeddings);
        }
        const RunReport report = train(bundle, cfg);
        const std::string task = "shift_" + std::to_string(shifts[i]);
        const auto rec = relative_transfer_difficulty(task, bundle.manifest.num_classes,
                                                      report.mean_zero_shot);
        MagnitudeStats stats;
        double mean_sum = 0.0, median_sum = 0.0;
        for (const auto& s : report.seeds) {
            mean_sum += s.residual_mean_abs;
            median_sum += s.residual_median_abs;
        }
        stats.mean_abs = mean_sum / static_cast<double>(report.seeds.size());
        stats.median_abs = median_sum / static_cast<double>(report.seeds.size());
        records.emplace_back(rec, stats);
        csv << task << "," << bundle.manifest.num_classes << "," << rec.zero_shot_accuracy << ","
            << rec.difficulty << "," << stats.mean_abs << "," << stats.median_abs << "\n";
        rows.push_back({{"task", task},
                        {"K", bundle.manifest.num_classes},
                        {"zero_shot", rec.zero_shot_accuracy},
                        {"difficulty", rec.difficulty},
                        {"log_difficulty", rec.log_difficulty},
                        {"mean_mag", stats.mean_abs},
                        {"median_mag", stats.median_abs}});
        log_debug(task + ": zero-shot " + std::to_string(rec.zero_shot_accuracy) + ", mean |x| " +
                  std::to_string(stats.mean_abs));
    }
    const double rho = magnitude_difficulty_correlation(records);
    csv << "# spearman_rho," << rho << "\n";
    std::cout << csv.str();
    if (!out_file.empty()) {
        std::ofstream out(out_file);
        if (!out) throw IoError("cannot write " + out_file);
        out << csv.str();
    }
    if (!json_file.empty()) {
        json doc;
        doc["magnitude_statistic"] = "mean_abs_entry";
        doc["records"] = rows;
        doc["spearman_rho"] = rho;
        std::ofstream out(json_file);
        if (!out) throw IoError("cannot write " + json_file);
        out << doc.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir, bool force) {
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir) && !force) {
        throw ValidationError("output directory " + out_dir +
                              " already exists; pass --force or choose a new path");
    }
    const Bundle bundle = generate(spec);
    write_bundle(out_dir, bundle);
    log_info("synthetic bundle written to " + out_dir);
    return kExitOk;
}

int cmd_compare(const std::string& base_preds, const std::string& tuned_preds,
                const std::string& labels_file) {
    const auto base = read_label_json(base_preds);
    const auto tuned = read_label_json(tuned_preds);
    const auto truth = read_label_json(labels_file);
    const auto shift = boundary_shift(base, tuned, truth);
    std::cout << "W2R " << shift.wrong_to_right << " R2W " << shift.right_to_wrong << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Task residual tuning and analysis on frozen embedding bundles"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "tune a target classifier on a bundle");
    TrainFlags train_flags;
    std::string train_bundle, train_out;
    bool train_force = false;
    train_cmd->add_option("--bundle", train_bundle, "bundle directory")->required();
    train_cmd->add_option("--out", train_out, "output directory for the run")->required();
    train_cmd->add_flag("--force", train_force, "allow writing into an existing directory");
    add_train_flags(train_cmd, train_flags);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate zero-shot or saved parameters");
    std::string eval_bundle, eval_params, eval_split = "test";
    std::string eval_dump_preds, eval_dump_labels;
    bool eval_per_class = false;
    eval_cmd->add_option("--bundle", eval_bundle, "bundle directory")->required();
    eval_cmd->add_option("--params", eval_params, "params.json from a finished run");
    eval_cmd->add_option("--split", eval_split, "split to evaluate")->default_str("test");
    eval_cmd->add_option("--dump-preds", eval_dump_preds, "write predictions as a JSON array");
    eval_cmd->add_option("--dump-labels", eval_dump_labels, "write true labels as a JSON array");
    eval_cmd->add_flag("--per-class", eval_per_class, "print per-class accuracy");

    // sweep-alpha
    auto* sweep_cmd = app.add_subcommand("sweep-alpha", "accuracy across scaling factors");
    TrainFlags sweep_flags;
    std::string sweep_bundle, sweep_out;
    std::vector<double> sweep_alphas;
    bool sweep_learnable = false;
    sweep_cmd->add_option("--bundle", sweep_bundle, "bundle directory")->required();
    sweep_cmd->add_option("--alphas", sweep_alphas, "alpha values (comma separated)")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_flag("--learnable", sweep_learnable, "append a learnable-alpha row");
    sweep_cmd->add_option("--out", sweep_out, "also write the CSV here");
    add_train_flags(sweep_cmd, sweep_flags);

    // difficulty
    auto* diff_cmd = app.add_subcommand(
        "difficulty", "relative transfer difficulty; ladder mode trains across shifts");
    std::size_t diff_k = 0;
    double diff_zero_shot = 0.0;
    std::string diff_task = "task";
    std::vector<double> diff_shifts;
    std::string diff_out;
    std::string diff_json;
    TrainFlags diff_flags;
    SynthSpec diff_synth;
    diff_cmd->add_option("--k", diff_k, "number of classes");
    diff_cmd->add_option("--zero-shot", diff_zero_shot, "zero-shot accuracy in (0, 1]");
    diff_cmd->add_option("--task", diff_task, "task name for the record");
    diff_cmd->add_option("--ladder-shifts", diff_shifts,
                         "strictly increasing shifts; runs the synthetic ladder")
        ->delimiter(',');
    diff_cmd->add_option("--out", diff_out, "also write the ladder CSV here");
    diff_cmd->add_option("--json", diff_json, "also write the ladder records as JSON");
    diff_cmd->add_option("--classes", diff_synth.num_classes, "ladder: classes")->default_str("10");
    diff_cmd->add_option("--dim", diff_synth.dim, "ladder: embedding dim")->default_str("32");
    diff_cmd->add_option("--train-per-class", diff_synth.train_per_class,
                         "ladder: train rows per class")
        ->default_str("16");
    diff_cmd->add_option("--test-per-class", diff_synth.test_per_class,
                         "ladder: test rows per class")
        ->default_str("100");
    diff_cmd->add_option("--noise", diff_synth.sample_noise, "ladder: sample noise")
        ->default_str("0");
    diff_cmd->add_option("--synth-seed", diff_synth.seed, "ladder: generator seed")
        ->default_str("0");
    diff_cmd->add_option("--tau", diff_synth.temperature, "ladder: bundle temperature")
        ->default_str("0.05");
    add_train_flags(diff_cmd, diff_flags);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic bundle");
    SynthSpec synth_spec;
    std::string synth_out;
    bool synth_force = false;
    synth_cmd->add_option("--out", synth_out, "output bundle directory")->required();
    synth_cmd->add_flag("--force", synth_force, "allow writing into an existing directory");
    synth_cmd->add_option("--classes", synth_spec.num_classes, "number of classes")
        ->default_str("10");
    synth_cmd->add_option("--dim", synth_spec.dim, "embedding dimension")->default_str("32");
    synth_cmd->add_option("--train-per-class", synth_spec.train_per_class, "train rows per class")
        ->default_str("16");
    synth_cmd->add_option("--test-per-class", synth_spec.test_per_class, "test rows per class")
        ->default_str("100");
    synth_cmd->add_option("--shift", synth_spec.shift, "base-classifier misalignment scale")
        ->default_str("0");
    synth_cmd->add_option("--noise", synth_spec.sample_noise, "within-class image spread")
        ->default_str("0");
    synth_cmd->add_option("--seed", synth_spec.seed, "generator seed")->default_str("0");
    synth_cmd->add_option("--tau", synth_spec.temperature, "bundle temperature")
        ->default_str("0.05");

    // compare
    auto* compare_cmd =
        app.add_subcommand("compare", "Wrong2Right / Right2Wrong between two prediction files");
    std::string cmp_base, cmp_tuned, cmp_labels;
    compare_cmd->add_option("--base-preds", cmp_base, "JSON predictions of the base classifier")
        ->required();
    compare_cmd->add_option("--tuned-preds", cmp_tuned, "JSON predictions of the tuned classifier")
        ->required();
    compare_cmd->add_option("--labels", cmp_labels, "JSON array of true labels")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            return cmd_train(train_cmd, train_flags, train_bundle, train_out, train_force);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_bundle, eval_params, eval_split, eval_dump_preds,
                            eval_dump_labels, eval_per_class);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep_alpha(sweep_cmd, sweep_flags, sweep_bundle, sweep_alphas,
                                   sweep_learnable, sweep_out);
        }
        if (diff_cmd->parsed()) {
            if (!diff_shifts.empty()) {
                return cmd_difficulty_ladder(diff_cmd, diff_flags, diff_synth, diff_shifts,
                                             diff_out, diff_json);
            }
            if (diff_cmd->count("--k") == 0 || diff_cmd->count("--zero-shot") == 0) {
                std::cerr << "difficulty: either --k and --zero-shot, or --ladder-shifts\n";
                return kExitUsage;
            }
            return cmd_difficulty_single(diff_k, diff_zero_shot, diff_task);
        }
        if (synth_cmd->parsed()) return cmd_synth(synth_spec, synth_out, synth_force);
        if (compare_cmd->parsed()) return cmd_compare(cmp_base, cmp_tuned, cmp_labels);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}

}  // namespace taskres
