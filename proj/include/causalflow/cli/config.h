#pragma once

#include "causalflow/covariates.h"
#include "causalflow/flow/standardization.h"
#include "causalflow/training/fit.h"
#include "causalflow/training/split.h"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace causalflow::cli {

/// Version stamp written next to every output.
inline constexpr int kOutputFormatVersion = 1;

struct SupportConfig {
    std::string mode = "fixed";  // "fixed" | "percentile"
    double threshold = -10.0;    // fixed mode
    double percentile = 1.0;     // percentile mode, in (0, 100)
};

struct DeltaConfig {
    std::string mode = "estimate";  // "estimate" (from outreach flags) | "fixed"
    double value = 0.0;             // fixed mode
};

/// A sweep over one covariate: an explicit grid, or `points` values evenly
/// spaced on [min, max].
struct SweepConfig {
    std::string axis = "precipitation";
    std::vector<double> grid;
    double min = 0.0;
    double max = 0.0;
    int points = 0;

    [[nodiscard]] Covariate covariate() const;
    [[nodiscard]] std::vector<double> values() const;
};

/// Synthetic benchmark settings.
struct BenchConfig {
    std::vector<std::string> processes{"constant", "linear", "interaction"};
    std::size_t records = 5000;     // per process, both arms plus outreach records
    std::size_t grid_points = 20;   // in-support evaluation points
    std::size_t sweep_points = 15;
    double outreach_fraction = 0.05;
    double outreach_shift = 9780.0;
    /// Outcome-flow batch size; smaller than the training default for more steps per epoch.
    int batch_size = 128;
    /// Support-flow search budget unless support_train is given explicitly.
    int support_trials = 10;
};

struct RunConfig {
    std::filesystem::path input;
    std::filesystem::path output_dir = "causalflow_out";
    std::uint64_t seed = 0;
    training::TrainConfig train;
    /// Support-flow search; falls back to `train` when absent.
    std::optional<training::TrainConfig> support_train;
    training::SplitSpec split;
    flow::OutcomeTransform outcome = flow::OutcomeTransform::log1p();
    SupportConfig support;
    DeltaConfig delta_y;
    std::size_t draws = 10000;
    std::size_t sbc_draws = 200;
    std::size_t sbc_bins = 20;
    std::vector<double> coverage_levels{0.1, 0.25, 0.5, 0.68, 0.8, 0.9, 0.95};
    std::size_t coverage_draws = 1000;
    std::vector<SweepConfig> sweeps;
    /// Outreach-only records are held out of the treated-arm fit by default.
    bool outreach_in_treated_arm = false;
    BenchConfig bench;

    /// Throws ConfigError on any invalid field.
    void validate() const;
    /// Seeds of the arm-level searches, derived from `seed`.
    [[nodiscard]] training::TrainConfig train_for(std::size_t stream) const;
    [[nodiscard]] training::TrainConfig support_train_for(std::size_t stream) const;
};

/// Built-in defaults overlaid with the environment (CAUSALFLOW_OUTPUT_DIR,
/// CAUSALFLOW_WORKERS).
RunConfig default_run_config();

/// Overlays `j` on `base`; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);
nlohmann::json to_json(const RunConfig& config);

/// Writes effective_config.json with the format-version stamp into dir.
void write_effective_config(const std::filesystem::path& dir, const nlohmann::json& config,
                            const std::string& command);

}  // namespace causalflow::cli
