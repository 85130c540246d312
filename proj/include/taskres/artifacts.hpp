#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taskres/trainer.hpp"

namespace taskres {

inline constexpr const char* kToolVersion = "0.1.0";

/// Config <-> JSON (flags > config file > built-in defaults; the resolved
/// config is echoed into every run manifest). "alpha" is either a number or
/// the string "learnable".
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base);

/// Deterministic metric subtree of a report: everything except wall-clock
/// and timestamps, so identical runs serialize byte-identically.
nlohmann::json report_metrics_json(const RunReport& report);
nlohmann::json report_to_json(const RunReport& report);

/// One learned parameter record per seed, reconstructed bit-exactly: the
/// sidecars are raw little-endian float64 (embedding payloads stay float32;
/// parameters keep full precision so re-evaluation reproduces reported
/// accuracies exactly).
struct LoadedSeedParams {
    std::uint64_t seed = 0;
    TargetClassifierSpec spec;
    std::optional<Matrix> enhanced_projection;
};

void write_params(const std::filesystem::path& dir, const RunReport& report);
std::vector<LoadedSeedParams> read_params(const std::filesystem::path& params_json);

/// `epoch,mean_loss,lr` rows, one `# seed <s>` block per seed.
void write_loss_csv(const std::filesystem::path& path, const RunReport& report);

/// Writes the complete run directory: manifest.json (run manifest with the
/// resolved config and bundle payload hashes), report.json, params.json plus
/// sidecars, loss.csv. Refuses to touch an existing directory unless
/// `force`.
void write_run_outputs(const std::filesystem::path& out_dir,
                       const std::filesystem::path& bundle_path, const RunReport& report,
                       bool force);

}  // namespace taskres
