#include "causalflow/causal/bundle.h"

#include "causalflow/error.h"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <fstream>
#include <sstream>

namespace causalflow::causal {

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(fmt::format("cannot read {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError(fmt::format("cannot write {}", path.string()));
    }
    out << text;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

std::string schema_hash(const flow::CovariateStandardizer& standardizer) {
    std::string text;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        text += fmt::format("{}:{};", kCovariateColumns[i], standardizer.log_transform[i] ? "log" : "linear");
    }
    return sha256_hex(text);
}

nlohmann::json save_bundle(const std::filesystem::path& dir, const CausalModel& model, const BundleInfo& info) {
    std::filesystem::create_directories(dir);
    const std::pair<std::string_view, nlohmann::json> files[] = {
        {kTreatedEnsembleFile, flow::to_json(model.treated())},
        {kControlEnsembleFile, flow::to_json(model.control())},
        {kTreatedSupportFile, flow::to_json(model.support_treated())},
        {kControlSupportFile, flow::to_json(model.support_control())},
    };
    nlohmann::json hashes = nlohmann::json::object();
    for (const auto& [name, j] : files) {
        const auto text = j.dump();
        write_file(dir / name, text);
        hashes[std::string(name)] = sha256_hex(text);
    }
    nlohmann::json manifest = {
        {"format_version", kBundleFormatVersion},
        {"threshold", model.threshold()},
        {"threshold_mode", info.threshold_mode},
        {"delta_y", model.delta_y()},
        {"delta_y_provenance", std::string(to_string(model.delta_provenance()))},
        {"schema_hash", schema_hash(model.support_treated().standardizer())},
        {"covariates", std::vector<std::string>(kCovariateColumns.begin(), kCovariateColumns.end())},
        {"files", hashes},
    };
    if (info.threshold_mode == "percentile") {
        manifest["threshold_percentile"] = info.threshold_percentile;
    }
    write_file(dir / kManifestFile, manifest.dump(2) + "\n");
    return manifest;
}

LoadedBundle load_bundle(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(dir / kManifestFile));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("bad bundle manifest: {}", e.what()));
    }
    if (manifest.value("format_version", 0) != kBundleFormatVersion) {
        throw ConfigError(fmt::format("unsupported bundle format version {}", manifest.value("format_version", 0)));
    }
    const auto load = [&](std::string_view name) {
        const auto text = read_file(dir / name);
        const auto expected = manifest.at("files").value(std::string(name), std::string{});
        if (sha256_hex(text) != expected) {
            throw ConfigError(fmt::format("{} does not match its manifest hash", name));
        }
        return nlohmann::json::parse(text);
    };
    try {
        auto treated = flow::ensemble_from_json(load(kTreatedEnsembleFile));
        auto control = flow::ensemble_from_json(load(kControlEnsembleFile));
        auto support_t = flow::density_flow_from_json(load(kTreatedSupportFile));
        auto support_c = flow::density_flow_from_json(load(kControlSupportFile));
        if (schema_hash(support_t.standardizer()) != manifest.at("schema_hash").get<std::string>()) {
            throw ConfigError("bundle schema hash does not match its support flows");
        }
        CausalModel model(std::move(treated), std::move(control), std::move(support_t), std::move(support_c),
                          manifest.at("threshold").get<double>(), manifest.at("delta_y").get<double>(),
                          delta_provenance_from_string(manifest.at("delta_y_provenance").get<std::string>()));
        return {std::move(model), std::move(manifest)};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed bundle: {}", e.what()));
    }
}

}  // namespace causalflow::causal
