#include "taskres/artifacts.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "taskres/errors.hpp"
#include "taskres/gradients.hpp"

namespace taskres {

namespace {

using nlohmann::json;

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

const char* adapter_kind_name(AdapterKind k) {
    switch (k) {
        case AdapterKind::kRelu: return "relu";
        case AdapterKind::kLinear: return "linear";
        case AdapterKind::kLinearBias: return "linear-bias";
    }
    return "?";
}

AdapterKind adapter_kind_from_name(const std::string& name) {
    if (name == "relu") return AdapterKind::kRelu;
    if (name == "linear") return AdapterKind::kLinear;
    if (name == "linear-bias") return AdapterKind::kLinearBias;
    throw ValidationError("unknown adapter kind '" + name + "'");
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed on " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + " parse error: " + e.what());
    }
    return j;
}

struct ArrayRef {
    std::string name;
    const double* data;
    std::size_t rows;
    std::size_t cols;
};

std::vector<ArrayRef> spec_arrays(const TargetClassifierSpec& spec) {
    std::vector<ArrayRef> arrays;
    if (spec.residual) {
        const auto& m = spec.residual->values;
        arrays.push_back({param_names::kResidual, m.data.data(), m.rows, m.cols});
    }
    if (spec.adapter) {
        const auto& w = *spec.adapter;
        arrays.push_back({param_names::kAdapterW1, w.w1.data.data(), w.w1.rows, w.w1.cols});
        arrays.push_back({param_names::kAdapterW2, w.w2.data.data(), w.w2.rows, w.w2.cols});
        if (w.kind == AdapterKind::kLinearBias) {
            arrays.push_back({param_names::kAdapterB1, w.bias1.data(), 1, w.bias1.size()});
            arrays.push_back({param_names::kAdapterB2, w.bias2.data(), 1, w.bias2.size()});
        }
    }
    if (spec.image_residual) {
        const auto& r = *spec.image_residual;
        arrays.push_back({param_names::kImageResidual, r.values.data(), 1, r.values.size()});
    }
    return arrays;
}

}  // namespace

json config_to_json(const TrainConfig& cfg) {
    json j;
    j["variant"] = variant_name(cfg.variant);
    j["adapter_kind"] = adapter_kind_name(cfg.adapter_kind);
    j["shots"] = cfg.shots;
    j["epochs"] = cfg.resolved_epochs();
    j["batch_size"] = cfg.batch_size;
    j["base_lr"] = cfg.base_lr;
    j["warmup_lr"] = cfg.warmup_lr;
    if (cfg.alpha_mode == AlphaMode::kLearnable) {
        j["alpha"] = "learnable";
    } else {
        j["alpha"] = cfg.alpha;
    }
    j["enhanced_base"] = cfg.enhanced_base;
    j["enhanced_epochs"] = cfg.enhanced_epochs;
    j["seeds"] = cfg.seeds;
    if (cfg.adapter_hidden) {
        j["adapter_hidden"] = *cfg.adapter_hidden;
    } else {
        j["adapter_hidden"] = nullptr;
    }
    j["train_split"] = cfg.train_split;
    j["test_split"] = cfg.test_split;
    j["jobs"] = cfg.jobs;
    return j;
}

TrainConfig config_from_json(const json& j, TrainConfig cfg) {
    try {
        if (j.contains("variant")) {
            const auto name = j.at("variant").get<std::string>();
            const auto v = variant_from_name(name);
            if (!v) throw ValidationError("unknown variant '" + name + "'");
            cfg.variant = *v;
        }
        if (j.contains("adapter_kind")) {
            cfg.adapter_kind = adapter_kind_from_name(j.at("adapter_kind").get<std::string>());
        }
        if (j.contains("shots")) cfg.shots = j.at("shots").get<std::size_t>();
        if (j.contains("epochs") && !j.at("epochs").is_null()) {
            cfg.epochs = j.at("epochs").get<std::size_t>();
        }
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("base_lr")) cfg.base_lr = j.at("base_lr").get<double>();
        if (j.contains("warmup_lr")) cfg.warmup_lr = j.at("warmup_lr").get<double>();
        if (j.contains("alpha")) {
            const auto& a = j.at("alpha");
            if (a.is_string()) {
                if (a.get<std::string>() != "learnable") {
                    throw ValidationError("alpha must be a number or \"learnable\"");
                }
                cfg.alpha_mode = AlphaMode::kLearnable;
            } else {
                cfg.alpha_mode = AlphaMode::kFixed;
                cfg.alpha = a.get<double>();
            }
        }
        if (j.contains("enhanced_base")) cfg.enhanced_base = j.at("enhanced_base").get<bool>();
        if (j.contains("enhanced_epochs")) {
            cfg.enhanced_epochs = j.at("enhanced_epochs").get<std::size_t>();
        }
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("adapter_hidden") && !j.at("adapter_hidden").is_null()) {
            cfg.adapter_hidden = j.at("adapter_hidden").get<std::size_t>();
        }
        if (j.contains("train_split")) cfg.train_split = j.at("train_split").get<std::string>();
        if (j.contains("test_split")) cfg.test_split = j.at("test_split").get<std::string>();
        if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config schema error: ") + e.what());
    }
    return cfg;
}

json report_metrics_json(const RunReport& report) {
    json per_seed = json::array();
    for (const auto& s : report.seeds) {
        json row;
        row["seed"] = s.seed;
        row["test_accuracy"] = s.test_accuracy;
        row["zero_shot_accuracy"] = s.zero_shot_accuracy;
        row["wrong_to_right"] = s.wrong_to_right;
        row["right_to_wrong"] = s.right_to_wrong;
        row["final_alpha"] = s.final_alpha;
        row["residual_mean_abs"] = s.residual_mean_abs;
        row["residual_median_abs"] = s.residual_median_abs;
        row["final_epoch_loss"] = s.epoch_mean_loss.empty() ? json() : json(s.epoch_mean_loss.back());
        per_seed.push_back(row);
    }
    json metrics;
    metrics["per_seed"] = per_seed;
    metrics["mean_accuracy"] = report.mean_accuracy;
    metrics["std_accuracy"] = report.std_accuracy;
    metrics["mean_zero_shot"] = report.mean_zero_shot;
    return metrics;
}

json report_to_json(const RunReport& report) {
    json j;
    j["format"] = "taskres-report-v1";
    j["config"] = config_to_json(report.config);
    j["temperature"] = report.temperature;
    j["base_hash_before"] = hex64(report.base_hash_before);
    j["base_hash_after"] = hex64(report.base_hash_after);
    j["metrics"] = report_metrics_json(report);
    json wall = json::array();
    for (const auto& s : report.seeds) wall.push_back(s.wall_seconds);
    j["wall_seconds_per_seed"] = wall;
    if (report.config.enhanced_base && !report.seeds.empty()) {
        j["enhanced_stage_lr"] = report.seeds.front().enhanced_stage_lr;
    }
    return j;
}

void write_params(const std::filesystem::path& dir, const RunReport& report) {
    json seeds = json::array();
    for (const auto& s : report.seeds) {
        const auto& spec = s.final_spec;
        json rec;
        rec["seed"] = s.seed;
        rec["construction"] = construction_name(spec.construction);
        if (spec.residual) {
            rec["alpha_mode"] =
                spec.residual->alpha_mode == AlphaMode::kLearnable ? "learnable" : "fixed";
            rec["alpha"] = spec.residual->effective_alpha();
            if (spec.residual->alpha_mode == AlphaMode::kLearnable) {
                rec["alpha_raw"] = spec.residual->alpha_raw;
            }
        }
        if (spec.adapter) {
            rec["adapter_kind"] = adapter_kind_name(spec.adapter->kind);
            rec["alpha"] = spec.adapter->alpha;
            rec["hidden"] = spec.adapter->hidden();
        }
        if (spec.image_residual) rec["image_alpha"] = spec.image_residual->alpha;

        json arrays = json::object();
        for (const auto& a : spec_arrays(spec)) {
            const std::string file = "params_seed" + std::to_string(s.seed) + "_" + a.name + ".f64";
            write_f64_file(dir / file, std::vector<double>(a.data, a.data + a.rows * a.cols));
            arrays[a.name] = {{"file", file}, {"rows", a.rows}, {"cols", a.cols}, {"dtype", "f64"}};
        }
        if (s.enhanced_projection) {
            const auto& p = *s.enhanced_projection;
            const std::string file =
                "params_seed" + std::to_string(s.seed) + "_enhanced_projection.f64";
            write_f64_file(dir / file, p.data);
            arrays["enhanced_projection"] =
                {{"file", file}, {"rows", p.rows}, {"cols", p.cols}, {"dtype", "f64"}};
        }
        rec["arrays"] = arrays;
        seeds.push_back(rec);
    }

    json j;
    j["format"] = "taskres-params-v1";
    j["seeds"] = seeds;
    write_json_file(dir / "params.json", j);
}

std::vector<LoadedSeedParams> read_params(const std::filesystem::path& params_json) {
    const json j = read_json_file(params_json);
    if (!j.contains("format") || j.at("format") != "taskres-params-v1") {
        throw ValidationError(params_json.string() + ": not a taskres-params-v1 file");
    }
    const auto dir = params_json.parent_path();

    auto load_array = [&](const json& arrays, const char* name) -> Matrix {
        const auto& a = arrays.at(name);
        const auto rows = a.at("rows").get<std::size_t>();
        const auto cols = a.at("cols").get<std::size_t>();
        Matrix m(rows, cols);
        m.data = read_f64_file(dir / a.at("file").get<std::string>(), rows * cols);
        return m;
    };

    std::vector<LoadedSeedParams> out;
    try {
        for (const auto& rec : j.at("seeds")) {
            LoadedSeedParams loaded;
            loaded.seed = rec.at("seed").get<std::uint64_t>();
            const auto& arrays = rec.at("arrays");
            const std::string construction = rec.at("construction").get<std::string>();

            TargetClassifierSpec spec;
            if (construction == "base") {
                spec.construction = Construction::kBase;
            } else if (construction == "taskres") {
                spec.construction = Construction::kTaskRes;
                TaskResidual res;
                res.values = load_array(arrays, param_names::kResidual);
                if (rec.at("alpha_mode").get<std::string>() == "learnable") {
                    res.alpha_mode = AlphaMode::kLearnable;
                    res.alpha_raw = rec.at("alpha_raw").get<double>();
                } else {
                    res.alpha_mode = AlphaMode::kFixed;
                    res.alpha = rec.at("alpha").get<double>();
                }
                spec.residual = std::move(res);
            } else if (construction == "adapter_style" || construction == "direct_adapter") {
                spec.construction = construction == "adapter_style" ? Construction::kAdapterStyle
                                                                    : Construction::kDirectAdapter;
                AdapterWeights w;
                w.kind = adapter_kind_from_name(rec.at("adapter_kind").get<std::string>());
                w.alpha = rec.at("alpha").get<double>();
                w.w1 = load_array(arrays, param_names::kAdapterW1);
                w.w2 = load_array(arrays, param_names::kAdapterW2);
                if (w.kind == AdapterKind::kLinearBias) {
                    w.bias1 = load_array(arrays, param_names::kAdapterB1).data;
                    w.bias2 = load_array(arrays, param_names::kAdapterB2).data;
                }
                spec.adapter = std::move(w);
            } else {
                throw ValidationError("unknown construction '" + construction + "' in params");
            }

            if (arrays.contains(param_names::kImageResidual)) {
                ImageResidual r;
                r.values = load_array(arrays, param_names::kImageResidual).data;
                r.alpha = rec.contains("image_alpha") ? rec.at("image_alpha").get<double>() : 0.5;
                spec.image_residual = std::move(r);
            }
            if (arrays.contains("enhanced_projection")) {
                loaded.enhanced_projection = load_array(arrays, "enhanced_projection");
            }
            loaded.spec = std::move(spec);
            out.push_back(std::move(loaded));
        }
    } catch (const json::exception& e) {
        throw ValidationError(params_json.string() + " schema error: " + e.what());
    }
    return out;
}

void write_loss_csv(const std::filesystem::path& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,mean_loss,lr\n";
    out << std::setprecision(17);
    for (const auto& s : report.seeds) {
        out << "# seed " << s.seed << "\n";
        for (std::size_t e = 0; e < s.epoch_mean_loss.size(); ++e) {
            out << e << "," << s.epoch_mean_loss[e] << "," << s.epoch_lr[e] << "\n";
        }
    }
    if (!out) throw IoError("write failed on " + path.string());
}

void write_run_outputs(const std::filesystem::path& out_dir,
                       const std::filesystem::path& bundle_path, const RunReport& report,
                       bool force) {
    if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir) && !force) {
        throw ValidationError("output directory " + out_dir.string() +
                              " already exists; pass --force or choose a new path");
    }
    const std::string started = utc_now();
    std::filesystem::create_directories(out_dir);

    json manifest;
    manifest["format"] = "taskres-run-v1";
    manifest["tool_version"] = kToolVersion;
    manifest["config"] = config_to_json(report.config);
    json bundle_info;
    bundle_info["path"] = bundle_path.string();
    json hashes = json::object();
    if (std::filesystem::exists(bundle_path / "manifest.json")) {
        for (const auto& entry : std::filesystem::directory_iterator(bundle_path)) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            if (name.ends_with(".f32") || name.ends_with(".u32")) {
                hashes[name] = hex64(fnv1a_file(entry.path()));
            }
        }
    }
    bundle_info["payload_hashes"] = hashes;
    manifest["bundle"] = bundle_info;
    manifest["outputs"] = {{"report", "report.json"},
                           {"params", "params.json"},
                           {"loss_curves", "loss.csv"}};
    manifest["started_utc"] = started;

    write_params(out_dir, report);
    write_json_file(out_dir / "report.json", report_to_json(report));
    write_loss_csv(out_dir / "loss.csv", report);

    manifest["finished_utc"] = utc_now();
    write_json_file(out_dir / "manifest.json", manifest);
}

}  // namespace taskres
