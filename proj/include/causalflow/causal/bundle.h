#pragma once

#include "causalflow/causal/model.h"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace causalflow::causal {

inline constexpr int kBundleFormatVersion = 1;

/// Bundle file names.
inline constexpr std::string_view kTreatedEnsembleFile = "q_T.json";
inline constexpr std::string_view kControlEnsembleFile = "q_C.json";
inline constexpr std::string_view kTreatedSupportFile = "Q_T.json";
inline constexpr std::string_view kControlSupportFile = "Q_C.json";
inline constexpr std::string_view kManifestFile = "manifest.json";

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of the covariate column order and the log-transform convention; two
/// bundles agree on inputs iff their schema hashes agree.
std::string schema_hash(const flow::CovariateStandardizer& standardizer);

struct BundleInfo {
    std::string threshold_mode = "fixed";  // "fixed" or "percentile"
    double threshold_percentile = 0.0;     // meaningful in percentile mode
};

/// Writes the four flow files and the manifest (threshold, delta-y with its
/// provenance, schema hash, per-file SHA-256). Returns the manifest.
nlohmann::json save_bundle(const std::filesystem::path& dir, const CausalModel& model, const BundleInfo& info = {});

struct LoadedBundle {
    CausalModel model;
    nlohmann::json manifest;
};

/// Throws ConfigError for missing files, hash mismatches or an unknown format version.
LoadedBundle load_bundle(const std::filesystem::path& dir);

}  // namespace causalflow::causal
